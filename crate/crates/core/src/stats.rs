//! Small numeric helpers: compensated summation, z-scores and the inverse
//! standard-normal CDF.

/// Neumaier-compensated running sum. Sums of the same values agree to within
/// a couple of ulps regardless of the order they were added in.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().value() / values.len() as f64
}

/// Population standard deviation (divides by `n`), matching the convention of
/// `scipy.stats.zscore` with its default `ddof = 0`.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: CompensatedSum = values.iter().map(|v| (v - m) * (v - m)).collect();
    (ss.value() / values.len() as f64).sqrt()
}

/// Standardized values. Returns `None` for a constant series.
pub fn zscores(values: &[f64]) -> Option<Vec<f64>> {
    let m = mean(values);
    let sd = std_dev(values);
    if sd == 0.0 || !sd.is_finite() {
        return None;
    }
    Some(values.iter().map(|v| (v - m) / sd).collect())
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error below 1.2e-9 over the
/// open unit interval). Returns +/- infinity at the endpoints and NaN outside.
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_quantiles() {
        let table = [
            (0.5, 0.0),
            (0.9, 1.2815515655446004),
            (0.95, 1.6448536269514722),
            (0.975, 1.959963984540054),
            (0.99, 2.3263478740408408),
            (0.999, 3.090232306167813),
            (0.01, -2.3263478740408408),
            (0.001, -3.090232306167813),
        ];
        for (p, z) in table {
            assert!((normal_quantile(p) - z).abs() < 1e-8, "p={p}");
        }
    }

    #[test]
    fn quantile_edges() {
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(normal_quantile(1.0), f64::INFINITY);
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn compensated_sum_is_order_insensitive() {
        let vals: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 1000) as f64 * 0.1 + 1e-3).collect();
        let fwd: CompensatedSum = vals.iter().copied().collect();
        let rev: CompensatedSum = vals.iter().rev().copied().collect();
        let mut halves: CompensatedSum = vals[..5000].iter().copied().collect();
        halves.merge(&vals[5000..].iter().copied().collect());
        assert!((fwd.value() - rev.value()).abs() <= 1e-9 * fwd.value());
        assert!((fwd.value() - halves.value()).abs() <= 1e-9 * fwd.value());
    }

    #[test]
    fn zscores_of_constant_series() {
        assert!(zscores(&[2.0, 2.0, 2.0]).is_none());
        let z = zscores(&[1.0, 3.0]).unwrap();
        assert_eq!(z, vec![-1.0, 1.0]);
    }
}
