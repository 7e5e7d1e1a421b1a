//! Log-gamma and the regularized incomplete gamma functions.
//!
//! `ln_gamma` uses the Lanczos approximation (g = 7, 9 terms). The incomplete
//! gamma pair uses the power series for `x < a + 1` and the modified Lentz
//! continued fraction otherwise. Both are good to roughly 1e-14 relative in
//! the ranges the tests in this crate exercise.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

/// Natural log of |Γ(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        return (PI / (PI * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// ln(n!) for non-negative integers.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// ln C(n, k). Returns -inf when `k > n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "gamma_p requires a > 0");
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        series(a, x)
    } else {
        1.0 - ln_continued_fraction(a, x).exp()
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    ln_gamma_q(a, x).exp()
}

/// ln Q(a, x), finite even where Q itself underflows.
pub fn ln_gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "gamma_q requires a > 0");
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        (-series(a, x)).ln_1p()
    } else {
        ln_continued_fraction(a, x)
    }
}

fn series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

// ln Q(a, x) via the Legendre continued fraction (modified Lentz).
fn ln_continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    -x + a * x.ln() - ln_gamma(a) + h.ln()
}

/// Complementary error function, via erfc(z) = Q(1/2, z²) for z ≥ 0.
pub fn erfc(z: f64) -> f64 {
    if z >= 0.0 {
        gamma_q(0.5, z * z)
    } else {
        2.0 - gamma_q(0.5, z * z)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(close(ln_gamma(0.5), PI.sqrt().ln(), 1e-14));
        assert!(close(ln_gamma(1.0), 0.0, 1e-14));
        assert!(close(ln_gamma(2.0), 0.0, 1e-14));
        // 10! = 3628800
        assert!(close(ln_factorial(10), 3_628_800f64.ln(), 1e-14));
        // exact ln(170!) summed term by term
        let direct: f64 = (2..=170).map(|k| (k as f64).ln()).sum();
        assert!(close(ln_factorial(170), direct, 1e-13));
        assert!(close(ln_gamma(0.1), 9.513_507_698_668_732f64.ln(), 1e-13));
    }

    #[test]
    fn ln_choose_matches_integers() {
        assert!(close(ln_choose(8, 4).exp(), 70.0, 1e-12));
        assert!(close(ln_choose(40, 20).exp(), 137_846_528_820.0, 1e-12));
        assert_eq!(ln_choose(3, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn incomplete_gamma_closed_forms() {
        // a = 1: P(1, x) = 1 - e^{-x}
        for &x in &[0.01, 0.5, 1.0, 3.0, 10.0, 40.0] {
            assert!(close(gamma_p(1.0, x), 1.0 - (-x).exp(), 1e-14), "x={x}");
            assert!(close(ln_gamma_q(1.0, x), -x, 1e-13), "x={x}");
        }
        // a = 2: Q(2, x) = (1 + x) e^{-x}
        for &x in &[0.2, 2.5, 7.0] {
            assert!(close(gamma_q(2.0, x), (1.0 + x) * (-x).exp(), 1e-13));
        }
    }

    #[test]
    fn ln_q_survives_underflow() {
        let lq = ln_gamma_q(0.5, 2000.0);
        assert!(lq.is_finite() && lq < -1990.0);
        assert_eq!(gamma_q(0.5, 2000.0), 0.0);
    }

    #[test]
    fn normal_cdf_values() {
        assert!(close(normal_cdf(0.0), 0.5, 1e-15));
        assert!(close(normal_cdf(1.959_963_984_540_054), 0.975, 1e-12));
        assert!(close(normal_cdf(-1.0), 0.158_655_253_931_457_05, 1e-12));
    }
}
