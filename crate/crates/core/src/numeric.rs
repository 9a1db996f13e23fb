//! Reductions with Neumaier compensation.
//!
//! Every reduction over the `k` components goes through [`CompensatedSum`], in
//! index order, so results do not depend on scheduling and the rounding error
//! stays `O(ε)` instead of `O(kε)`.

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Elements per plain-summed block in [`dot`]; blocks are combined with compensation.
pub const DOT_BLOCK: usize = 64;

/// Inner product: four fixed lanes within each block of [`DOT_BLOCK`]
/// elements, block partials compensated. Deterministic for a given length.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = CompensatedSum::new();
    for (ca, cb) in a.chunks(DOT_BLOCK).zip(b.chunks(DOT_BLOCK)) {
        let mut lanes = [0.0f64; 4];
        let mut qa = ca.chunks_exact(4);
        let mut qb = cb.chunks_exact(4);
        for (x, y) in (&mut qa).zip(&mut qb) {
            for l in 0..4 {
                lanes[l] += x[l] * y[l];
            }
        }
        for (x, y) in qa.remainder().iter().zip(qb.remainder()) {
            lanes[0] += x * y;
        }
        acc.add((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]));
    }
    acc.value()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y^(2m-1)` by repeated multiplication.
#[inline]
pub fn odd_power(y: f64, m: usize) -> f64 {
    let sq = y * y;
    let mut out = y;
    for _ in 1..m {
        out *= sq;
    }
    out
}

/// `y^(2m)` by repeated multiplication.
#[inline]
pub fn even_power(y: f64, m: usize) -> f64 {
    let sq = y * y;
    let mut out = sq;
    for _ in 1..m {
        out *= sq;
    }
    out
}

/// `‖a − b‖ / ‖b‖`, with `0` when both vanish and `∞` when only `b` does.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let diff = norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
    let scale = norm(b);
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / scale
    }
}

/// `⌈d^c⌉`, snapping to the nearest integer when `d^c` is one up to rounding.
pub fn ceil_pow(d: usize, exponent: f64) -> usize {
    let v = (d as f64).powf(exponent);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation (`n − 1` denominator); `0` for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    let ss = sum(values.iter().map(|v| (v - mu) * (v - mu)));
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
