use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Standardized lower bound beyond which the exponential-proposal sampler
/// replaces inverse-CDF sampling.
const TAIL_SWITCH: f64 = 4.0;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// Draws from `N(mu, var)` truncated to `(lower, upper]`. Either bound may
/// be infinite.
pub fn draw_truncnorm<R: Rng + ?Sized>(mu: f64, var: f64, lower: f64, upper: f64, rng: &mut R) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::invalid(format!(
            "truncated normal variance {var} must be positive"
        )));
    }
    if !(lower < upper) {
        return Err(Error::invalid(format!("empty truncation interval ({lower}, {upper}]")));
    }
    if !mu.is_finite() {
        return Err(Error::invalid(format!("truncated normal mean {mu} is not finite")));
    }
    let sd = var.sqrt();
    let a = (lower - mu) / sd;
    let b = (upper - mu) / sd;
    let t = standard(a, b, rng);
    // guard against rounding pushing the draw onto the wrong side of a bound
    Ok((mu + sd * t).max(next_up(lower)).min(upper))
}

fn next_up(x: f64) -> f64 {
    if x.is_infinite() {
        x
    } else {
        x + x.abs().max(f64::MIN_POSITIVE) * f64::EPSILON
    }
}

/// Standard normal truncated to `(a, b]`.
fn standard<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    match (a.is_infinite(), b.is_infinite()) {
        (true, true) => rng.sample(StandardNormal),
        (false, true) => lower_tail(a, rng),
        (true, false) => -lower_tail(-b, rng),
        (false, false) => {
            if a >= 0.0 {
                two_sided_positive(a, b, rng)
            } else if b <= 0.0 {
                -two_sided_positive(-b, -a, rng)
            } else {
                straddling(a, b, rng)
            }
        }
    }
}

/// Standard normal truncated to `(a, ∞)`.
fn lower_tail<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        // acceptance probability at least one half
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x > a {
                return x;
            }
        }
    } else if a < TAIL_SWITCH {
        let n = std_normal();
        let tail = n.cdf(-a);
        loop {
            let u: f64 = rng.random();
            let q = u * tail;
            if q > 0.0 {
                let x = -n.inverse_cdf(q);
                if x > a {
                    return x;
                }
            }
        }
    } else {
        exponential_tail(a, f64::INFINITY, rng)
    }
}

/// Rejection sampler with a translated exponential proposal, optimal rate
/// for the bound `a > 0`; the proposal is truncated at `b`.
fn exponential_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    let span = b - a;
    let mass = if span.is_finite() {
        -(-alpha * span).exp_m1()
    } else {
        1.0
    };
    loop {
        let x = if span.is_finite() {
            let u: f64 = rng.random();
            a - (-(u * mass)).ln_1p() / alpha
        } else {
            let e: f64 = rng.sample(Exp1);
            a + e / alpha
        };
        let u: f64 = rng.random();
        let d = x - alpha;
        if x > a && x <= b && u.ln() <= -0.5 * d * d {
            return x;
        }
    }
}

fn two_sided_positive<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let n = std_normal();
    let (ta, tb) = (n.cdf(-a), n.cdf(-b));
    let mass = ta - tb;
    if a < TAIL_SWITCH && mass > 1e-12 * ta.max(f64::MIN_POSITIVE) && mass > 0.0 {
        loop {
            let u: f64 = rng.random();
            let x = -n.inverse_cdf(tb + u * mass);
            if x > a && x <= b {
                return x;
            }
        }
    }
    if b - a < 1.0 / a.max(1.0) {
        // narrow interval: uniform proposal against a bounded density ratio
        loop {
            let u: f64 = rng.random();
            let x = a + u * (b - a);
            let v: f64 = rng.random();
            if x > a && v.ln() <= -0.5 * (x * x - a * a) {
                return x;
            }
        }
    }
    exponential_tail(a, b, rng)
}

fn straddling<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let n = std_normal();
    if n.cdf(b) - n.cdf(a) > 0.3 {
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x > a && x <= b {
                return x;
            }
        }
    }
    loop {
        let u: f64 = rng.random();
        let x = a + u * (b - a);
        let v: f64 = rng.random();
        if x > a && v.ln() <= -0.5 * x * x {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_of(n: usize, f: impl FnMut() -> f64) -> f64 {
        std::iter::repeat_with(f).take(n).sum::<f64>() / n as f64
    }

    #[test]
    fn half_line_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = (2.0 / std::f64::consts::PI).sqrt();
        let m = mean_of(100_000, || {
            draw_truncnorm(0.0, 1.0, 0.0, f64::INFINITY, &mut rng).unwrap()
        });
        assert!((m - target).abs() < 0.01, "{m}");
        let m = mean_of(100_000, || {
            draw_truncnorm(0.0, 1.0, f64::NEG_INFINITY, 0.0, &mut rng).unwrap()
        });
        assert!((m + target).abs() < 0.01, "{m}");
    }

    #[test]
    fn negligible_truncation_is_plain_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = mean_of(100_000, || {
            draw_truncnorm(10.0, 1.0, 0.0, f64::INFINITY, &mut rng).unwrap()
        });
        assert!((m - 10.0).abs() < 0.02);
    }

    #[test]
    fn far_tail_terminates_and_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = draw_truncnorm(-30.0, 1.0, 0.0, f64::INFINITY, &mut rng).unwrap();
            assert!(x > 0.0 && x < 1.0);
            let x = draw_truncnorm(25.0, 0.5, f64::NEG_INFINITY, 0.0, &mut rng).unwrap();
            assert!(x <= 0.0);
        }
        // tail mean of TN(0,1) on (a, ∞) is φ(a)/Φc(a) ≈ a + 1/a for large a
        let a = 9.0;
        let m = mean_of(50_000, || draw_truncnorm(0.0, 1.0, a, f64::INFINITY, &mut rng).unwrap());
        let n = std_normal();
        let expected = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt() / n.sf(a);
        assert!((m - expected).abs() < 0.01, "{m} vs {expected}");
    }

    #[test]
    fn two_sided_intervals() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(lo, hi) in &[
            (-0.5, 0.5),
            (1.0, 2.0),
            (5.0, 5.1),
            (-7.0, -6.0),
            (-3.0, 4.0),
            (40.0, 41.0),
        ] {
            for _ in 0..2000 {
                let x = draw_truncnorm(0.0, 1.0, lo, hi, &mut rng).unwrap();
                assert!(x > lo && x <= hi, "{x} not in ({lo}, {hi}]");
            }
        }
        // symmetric interval has mean zero
        let m = mean_of(50_000, || draw_truncnorm(0.0, 1.0, -0.5, 0.5, &mut rng).unwrap());
        assert!(m.abs() < 0.01);
    }

    #[test]
    fn invalid_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(draw_truncnorm(0.0, 0.0, 0.0, 1.0, &mut rng).is_err());
        assert!(draw_truncnorm(0.0, 1.0, 1.0, 1.0, &mut rng).is_err());
    }
}
