//! Scalar functions shared by the heads and losses.
//!
//! Everything here is written to stay finite for any finite input: the
//! logistic sigmoid never evaluates `exp` of a positive argument, and the
//! log-sigmoid pair splits on the sign of `z`.

/// Logistic sigmoid `1 / (1 + exp(-z))`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(z)) = min(z, 0) - log(1 + exp(-|z|))`.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    z.min(0.0) - (-z.abs()).exp().ln_1p()
}

/// `log(1 - sigmoid(z)) = -max(z, 0) - log(1 + exp(-|z|))`.
#[inline]
pub fn log_one_minus_sigmoid(z: f64) -> f64 {
    -z.max(0.0) - (-z.abs()).exp().ln_1p()
}

/// Numerically stable `log(sum(exp(z)))`.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_center_and_tails() {
        assert_eq!(sigmoid(0.0), 0.5);
        let tiny = sigmoid(-1000.0);
        assert!(tiny.is_finite() && (0.0..=1e-300).contains(&tiny));
        assert_eq!(sigmoid(1000.0), 1.0);
        for z in [-500.0, -30.0, 0.3, 30.0, 500.0] {
            let s = sigmoid(z);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn log_sigmoid_matches_naive_in_safe_range() {
        for z in [-5.0, -1.0, -0.1, 0.0, 0.2, 2.0, 7.0] {
            let naive = (1.0 / (1.0 + f64::exp(-z))).ln();
            assert!((log_sigmoid(z) - naive).abs() < 1e-14);
            let naive1 = (1.0 - 1.0 / (1.0 + f64::exp(-z))).ln();
            assert!((log_one_minus_sigmoid(z) - naive1).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sigmoid_survives_overflow_region() {
        for z in [-800.0, 800.0] {
            assert!(log_sigmoid(z).is_finite());
            assert!(log_one_minus_sigmoid(z).is_finite());
        }
        assert_eq!(log_sigmoid(-800.0), -800.0);
        assert_eq!(log_one_minus_sigmoid(800.0), -800.0);
    }

    #[test]
    fn log_sum_exp_is_shift_stable() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0; 4]) - 4f64.ln()).abs() < 1e-15);
    }
}
