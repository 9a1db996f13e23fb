//! Observable side of the Gaussian conditioning expansion.
//!
//! Given a fully recorded trajectory, the iterates `x̃_0, x̃_1, …` and the
//! nonlinearities `f_1, f_2, …` are orthogonalized in order. With
//! `h_i = A x̃_{i−1}^⊥` and `c_i = ⟨x̃_{i−1}^⊥, x̃_{t−1}⟩ / ‖x̃_{i−1}^⊥‖²` the
//! projection `y_t = A x̃_{t−1} = Σ_i c_i h_i` splits as `y_t = g_t + v_t` with
//!
//! ```text
//! g_t = Σ_{i=1}^{t}  c_i · Π^⊥_{F_{1:i−1}} h_i
//! v_t = Σ_{i=2}^{t}  c_i · f_{i−1}^⊥ ⟨x_{i−1}, x̃_{i−1}^⊥⟩ / ‖f_{i−1}^⊥‖²
//! ```
//!
//! The split is exact: `Π_{F_{1:i−1}} h_i` only has a component along
//! `f_{i−1}^⊥`, and that component is the `v_t` term.

use crate::model::ComponentMatrix;
use crate::numeric::{self, CompensatedSum};
use crate::power_iter::Trajectory;
use crate::{Error, Result};

/// Residuals shorter than this fraction of their source vector are degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Energies below this are treated as zero by the ratio diagnostics.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Sequential orthogonal residuals with one re-orthogonalization pass.
#[derive(Clone, Debug, Default)]
struct ResidualBasis {
    residuals: Vec<Vec<f64>>,
    norms_sq: Vec<f64>,
    degenerate: Vec<bool>,
}

impl ResidualBasis {
    /// Removes the components along the first `count` non-degenerate residuals (two MGS passes).
    fn project_out(&self, v: &[f64], count: usize) -> Vec<f64> {
        let mut r = v.to_vec();
        for _pass in 0..2 {
            for j in 0..count {
                if self.degenerate[j] {
                    continue;
                }
                let q = &self.residuals[j];
                let coef = numeric::dot(q, &r) / self.norms_sq[j];
                for (ri, qi) in r.iter_mut().zip(q) {
                    *ri -= coef * qi;
                }
            }
        }
        r
    }

    fn push(&mut self, v: &[f64]) {
        let r = self.project_out(v, self.residuals.len());
        let norm_sq = numeric::norm_sq(&r);
        let degenerate = norm_sq.is_nan()
            || norm_sq == 0.0
            || norm_sq.sqrt() < DEGENERACY_TOL * numeric::norm(v);
        self.residuals.push(r);
        self.norms_sq.push(norm_sq);
        self.degenerate.push(degenerate);
    }
}

/// `x̃_i^⊥ = Π^⊥_{X_{0:i−1}} x̃_i` for `i = 0..=upto` and
/// `f_i^⊥ = Π^⊥_{F_{1:i−1}} f_i` for `i = 1..=upto`.
#[derive(Clone, Debug)]
pub struct OrthogonalSequences {
    x: ResidualBasis,
    f: ResidualBasis,
}

impl OrthogonalSequences {
    pub fn upto(&self) -> usize {
        self.x.residuals.len() - 1
    }

    /// `x̃_i^⊥`, `i ∈ 0..=upto`.
    pub fn x_perp(&self, i: usize) -> &[f64] {
        &self.x.residuals[i]
    }

    /// `f_i^⊥`, `i ∈ 1..=upto`.
    pub fn f_perp(&self, i: usize) -> &[f64] {
        &self.f.residuals[i - 1]
    }

    pub fn x_degenerate(&self, i: usize) -> bool {
        self.x.degenerate[i]
    }

    pub fn f_degenerate(&self, i: usize) -> bool {
        self.f.degenerate[i - 1]
    }

    /// Indices `i` whose `x̃_i^⊥` was flagged degenerate.
    pub fn degenerate_x(&self) -> Vec<usize> {
        flagged(&self.x.degenerate, 0)
    }

    /// Indices `i` whose `f_i^⊥` was flagged degenerate.
    pub fn degenerate_f(&self) -> Vec<usize> {
        flagged(&self.f.degenerate, 1)
    }
}

fn flagged(flags: &[bool], offset: usize) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter(|(_, &d)| d)
        .map(|(i, _)| i + offset)
        .collect()
}

/// Orthogonalizes `x̃_0..=x̃_upto` and `f_1..=f_upto` of a full-record trajectory.
pub fn orthogonalize(traj: &Trajectory, upto: usize) -> Result<OrthogonalSequences> {
    if upto > traj.len() {
        return Err(Error::InvalidArgument {
            field: "upto_t",
            reason: format!("trajectory has only {} steps, asked for {upto}", traj.len()),
        });
    }
    let mut x = ResidualBasis::default();
    let mut f = ResidualBasis::default();
    x.push(traj.x_tilde(0));
    for step in &traj.steps[..upto] {
        let fv = step.f.as_ref().ok_or(Error::MissingFullRecord)?;
        f.push(fv);
        x.push(&step.x_tilde);
    }
    Ok(OrthogonalSequences { x, f })
}

/// `y_t = g_t + v_t` together with the `α`-profile and the split of `x̃_{t−1}`
/// along / orthogonal to `x₀`.
#[derive(Clone, Debug)]
pub struct ConditioningDecomposition {
    pub t: usize,
    /// The recorded `y_t`.
    pub y: Vec<f64>,
    pub g: Vec<f64>,
    pub v: Vec<f64>,
    /// `α_{i,t} = ⟨x̃_{i−1}^⊥, x̃_{t−1}⟩ / (√d ‖x̃_{i−1}^⊥‖)` for `i = 1..=t` (0 where degenerate).
    pub alphas: Vec<f64>,
    /// `‖Π^⊥_{x₀} x̃_{t−1}‖²`.
    pub p: f64,
    /// `‖Π_{x₀} x̃_{t−1}‖²`.
    pub q: f64,
    /// `i` such that the `i`-th term of the expansion was dropped as degenerate.
    pub excluded_terms: Vec<usize>,
}

impl ConditioningDecomposition {
    /// `‖y_t − g_t − v_t‖ / ‖y_t‖`.
    pub fn residual(&self) -> f64 {
        let sum: Vec<f64> = self.g.iter().zip(&self.v).map(|(g, v)| g + v).collect();
        numeric::relative_error(&sum, &self.y)
    }

    /// `|Σ_i α_{i,t}² − 1|`.
    pub fn alpha_sq_error(&self) -> f64 {
        (numeric::sum(self.alphas.iter().map(|a| a * a)) - 1.0).abs()
    }

    pub fn alpha1(&self) -> f64 {
        self.alphas[0]
    }
}

/// Splits `‖x‖²` into `(P, Q)`: the energy orthogonal to and along `x0`.
pub fn projection_split(x0: &[f64], x: &[f64]) -> (f64, f64) {
    let along = numeric::dot(x0, x);
    let x0_sq = numeric::norm_sq(x0);
    let coef = along / x0_sq;
    let p = numeric::sum(x.iter().zip(x0).map(|(xi, oi)| {
        let r = xi - coef * oi;
        r * r
    }));
    (p, along * along / x0_sq)
}

/// The per-`i` vectors of the expansion, independent of `t`.
struct ExpansionTerms {
    /// `Π^⊥_{F_{1:i−1}} h_i`, `i = 1..=n`.
    g_dirs: Vec<Vec<f64>>,
    /// `f_{i−1}^⊥ ⟨x_{i−1}, x̃_{i−1}^⊥⟩ / ‖f_{i−1}^⊥‖²`, `i = 2..=n` (`None` if degenerate).
    v_dirs: Vec<Option<Vec<f64>>>,
}

impl ExpansionTerms {
    fn build(
        seqs: &OrthogonalSequences,
        a: &ComponentMatrix,
        traj: &Trajectory,
        n: usize,
    ) -> Result<Self> {
        let mut g_dirs = Vec::with_capacity(n);
        let mut v_dirs = Vec::with_capacity(n);
        for i in 1..=n {
            let h = a.apply(seqs.x_perp(i - 1))?;
            g_dirs.push(seqs.f.project_out(&h, i - 1));
            if i == 1 {
                v_dirs.push(None);
                continue;
            }
            let j = i - 1;
            if seqs.f_degenerate(j) || seqs.x_degenerate(j) {
                v_dirs.push(None);
                continue;
            }
            let fp = seqs.f_perp(j);
            let coef = numeric::dot(&traj.steps[j - 1].x, seqs.x_perp(j)) / seqs.f.norms_sq[j - 1];
            v_dirs.push(Some(fp.iter().map(|v| v * coef).collect()));
        }
        Ok(Self { g_dirs, v_dirs })
    }

    fn decompose(
        &self,
        seqs: &OrthogonalSequences,
        traj: &Trajectory,
        t: usize,
    ) -> Result<ConditioningDecomposition> {
        let y = traj.steps[t - 1]
            .y
            .clone()
            .ok_or(Error::MissingFullRecord)?;
        let target = traj.x_tilde(t - 1);
        let sqrt_d = (target.len() as f64).sqrt();
        let k = y.len();
        let mut g = vec![CompensatedSum::new(); k];
        let mut v = vec![CompensatedSum::new(); k];
        let mut alphas = Vec::with_capacity(t);
        let mut excluded_terms = Vec::new();
        for i in 1..=t {
            if seqs.x_degenerate(i - 1) {
                alphas.push(0.0);
                excluded_terms.push(i);
                continue;
            }
            let xp = seqs.x_perp(i - 1);
            let inner = numeric::dot(xp, target);
            let norm_sq = seqs.x.norms_sq[i - 1];
            alphas.push(inner / (sqrt_d * norm_sq.sqrt()));
            let c = inner / norm_sq;
            for (acc, &dir) in g.iter_mut().zip(&self.g_dirs[i - 1]) {
                acc.add(c * dir);
            }
            if let Some(dir) = &self.v_dirs[i - 1] {
                for (acc, &d) in v.iter_mut().zip(dir) {
                    acc.add(c * d);
                }
            }
        }
        let (p, q) = projection_split(traj.x_tilde(0), target);
        Ok(ConditioningDecomposition {
            t,
            y,
            g: g.iter().map(CompensatedSum::value).collect(),
            v: v.iter().map(CompensatedSum::value).collect(),
            alphas,
            p,
            q,
            excluded_terms,
        })
    }
}

fn check_t(seqs: &OrthogonalSequences, traj: &Trajectory, t: usize) -> Result<()> {
    if t == 0 || t > traj.len() {
        return Err(Error::InvalidArgument {
            field: "t",
            reason: format!("must lie in 1..={}, got {t}", traj.len()),
        });
    }
    if seqs.upto() + 1 < t {
        return Err(Error::InvalidArgument {
            field: "t",
            reason: format!(
                "sequences orthogonalized only up to {}, need {}",
                seqs.upto(),
                t - 1
            ),
        });
    }
    Ok(())
}

/// Decomposition of `y_t`; `seqs` must reach at least index `t − 1`.
pub fn decompose_y(
    seqs: &OrthogonalSequences,
    a: &ComponentMatrix,
    traj: &Trajectory,
    t: usize,
) -> Result<ConditioningDecomposition> {
    check_t(seqs, traj, t)?;
    ExpansionTerms::build(seqs, a, traj, t)?.decompose(seqs, traj, t)
}

/// Decompositions for every `t ∈ 1..=upto`, sharing the per-term work.
pub fn decompose_all(
    a: &ComponentMatrix,
    traj: &Trajectory,
    upto: usize,
) -> Result<Vec<ConditioningDecomposition>> {
    if upto == 0 {
        return Ok(Vec::new());
    }
    let seqs = orthogonalize(traj, upto - 1)?;
    check_t(&seqs, traj, upto)?;
    let terms = ExpansionTerms::build(&seqs, a, traj, upto)?;
    (1..=upto)
        .map(|t| terms.decompose(&seqs, traj, t))
        .collect()
}

/// `P / Q`; `None` when `Q` has vanished (the iterate escaped `x₀`).
pub fn trapped_ratio(decomp: &ConditioningDecomposition) -> Option<f64> {
    (decomp.q >= RATIO_FLOOR).then(|| decomp.p / decomp.q)
}

/// `‖v_{t+1}‖² / ‖Π^⊥_{x₀} x̃_t‖²` read off the decomposition at `t + 1`;
/// `None` while the iterate still points along `x₀`.
pub fn vt_norm_ratio(decomp_next: &ConditioningDecomposition) -> Option<f64> {
    (decomp_next.p >= RATIO_FLOOR).then(|| numeric::norm_sq(&decomp_next.v) / decomp_next.p)
}

/// `‖f_t‖² / k`.
pub fn f_norm_stat(traj: &Trajectory, t: usize) -> Result<f64> {
    if t == 0 || t > traj.len() {
        return Err(Error::InvalidArgument {
            field: "t",
            reason: format!("must lie in 1..={}, got {t}", traj.len()),
        });
    }
    let f = traj.steps[t - 1]
        .f
        .as_ref()
        .ok_or(Error::MissingFullRecord)?;
    Ok(numeric::norm_sq(f) / f.len() as f64)
}
