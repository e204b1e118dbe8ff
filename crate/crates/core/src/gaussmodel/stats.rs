//! Running moments, frequencies, and the closed-form Gaussian helpers used as targets.

use libm::erfc;

use crate::numerics::ops::sigmoid_scalar;

/// Welford accumulator for mean and standard error.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn standard_error(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Counts successes of a Bernoulli event.
#[derive(Debug, Clone, Copy, Default)]
pub struct Frequency {
    hits: u64,
    total: u64,
}

impl Frequency {
    pub fn record(&mut self, hit: bool) {
        self.total += 1;
        if hit {
            self.hits += 1;
        }
    }

    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Binomial standard error `sqrt(p(1-p)/n)` at the observed rate.
    pub fn standard_error(&self) -> f64 {
        binomial_se(self.rate(), self.total)
    }
}

pub fn binomial_se(p: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Composite Simpson rule on `[a, b]` with `intervals` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2).next_multiple_of(2);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let x = a + h * k as f64;
        acc += if k % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

/// `E[σ(X)]` for `X ~ N(mean, sd²)`.
pub fn expected_sigmoid(mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return sigmoid_scalar(mean);
    }
    simpson(
        |t| normal_pdf(t) * sigmoid_scalar(mean + sd * t),
        -12.0,
        12.0,
        4000,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, -2.5, 3.25, 0.0];
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(m.mean(), mean, epsilon = 1e-15);
        assert_abs_diff_eq!(m.variance(), var, epsilon = 1e-14);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-13);
        assert_abs_diff_eq!(normal_cdf(-1.0), 0.158_655_253_931_457_05, epsilon = 1e-15);
    }

    #[test]
    fn simpson_integrates_the_density() {
        assert_abs_diff_eq!(simpson(normal_pdf, -10.0, 10.0, 2000), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn expected_sigmoid_symmetry() {
        assert_abs_diff_eq!(expected_sigmoid(0.0, 1.3), 0.5, epsilon = 1e-12);
        let a = expected_sigmoid(0.4, 0.7);
        let b = expected_sigmoid(-0.4, 0.7);
        assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-12);
    }
}
