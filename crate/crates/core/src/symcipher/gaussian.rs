//! Truncated discrete Gaussian over the integers, mass ∝ `exp(-π a² / (αq)²)`.

use rand::RngCore;

/// Inverse-CDF sampler over `|a| ≤ T`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    alpha_q: f64,
    tail: i64,
    // cdf[i] = P(a ≤ i - tail)
    cdf: Vec<f64>,
}

impl GaussianSampler {
    /// Sampler with the default cutoff `T = ⌈10·αq⌉`.
    pub fn new(alpha_q: f64) -> Self {
        Self::with_tail(alpha_q, (10.0 * alpha_q).ceil() as i64)
    }

    pub fn with_tail(alpha_q: f64, tail: i64) -> Self {
        assert!(alpha_q > 0.0 && alpha_q.is_finite(), "alpha_q must be positive");
        assert!(tail >= 0, "tail cutoff must be nonnegative");
        let width2 = alpha_q * alpha_q;
        let weights: Vec<f64> = (-tail..=tail)
            .map(|a| (-std::f64::consts::PI * (a * a) as f64 / width2).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        *cdf.last_mut().expect("support is nonempty") = 1.0;
        GaussianSampler { alpha_q, tail, cdf }
    }

    pub fn alpha_q(&self) -> f64 {
        self.alpha_q
    }

    pub fn tail_cutoff(&self) -> i64 {
        self.tail
    }

    pub fn support(&self) -> std::ops::RangeInclusive<i64> {
        -self.tail..=self.tail
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> i64 {
        // 53 uniform bits in [0, 1).
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx as i64 - self.tail
    }
}
