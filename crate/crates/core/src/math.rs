//! Small numeric kernels: error function, Gaussian tail mass, entropy terms.

use crate::scalar::Scalar;

/// `x * ln(x)` with the continuous extension `0 * ln(0) = 0`.
pub fn xlnx<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x * x.ln()
    } else {
        S::zero()
    }
}

/// Error function, accurate to a few ulps over the whole real line.
///
/// Uses the Maclaurin series below `|x| = 2` and a continued fraction for
/// the complementary function above it.
pub fn erf<S: Scalar>(x: S) -> S {
    if x < S::zero() {
        return -erf(-x);
    }
    if x <= S::of(2.0) {
        erf_series(x)
    } else {
        S::one() - erfc_cf(x)
    }
}

/// Complementary error function `1 - erf(x)`.
pub fn erfc<S: Scalar>(x: S) -> S {
    if x < S::zero() {
        return S::of(2.0) - erfc(-x);
    }
    if x <= S::of(2.0) {
        S::one() - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf<S: Scalar>(z: S) -> S {
    S::of(0.5) * erfc(-z / S::of(std::f64::consts::SQRT_2))
}

fn erf_series<S: Scalar>(x: S) -> S {
    // erf(x) = 2/sqrt(pi) * sum_k (-1)^k x^(2k+1) / (k! (2k+1))
    let x2 = x * x;
    let mut term = x;
    let mut sum = S::zero();
    let mut k = 0usize;
    loop {
        let contrib = term / S::of(2.0 * k as f64 + 1.0);
        sum = if k.is_multiple_of(2) { sum + contrib } else { sum - contrib };
        if contrib.abs() < sum.abs() * S::epsilon() || k > 200 {
            break;
        }
        k += 1;
        term = term * x2 / S::of(k as f64);
    }
    sum * S::of(2.0) / S::PI().sqrt()
}

fn erfc_cf<S: Scalar>(x: S) -> S {
    // sqrt(pi) e^(x^2) erfc(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    // evaluated with the modified Lentz scheme.
    let tiny = S::of(1e-290);
    let mut f = tiny;
    let mut c = f;
    let mut d = S::zero();
    let mut n = 1usize;
    loop {
        let a = if n == 1 {
            S::one()
        } else {
            S::of((n - 1) as f64 / 2.0)
        };
        d = x + a * d;
        if d == S::zero() {
            d = tiny;
        }
        d = d.recip();
        c = x + a / c;
        if c == S::zero() {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - S::one()).abs() < S::epsilon() || n > 300 {
            break;
        }
        n += 1;
    }
    (-x * x).exp() * f / S::PI().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Trapezoid quadrature of the defining integral, an implementation-free
    // reference for the series/continued-fraction split.
    fn erf_quadrature(x: f64) -> f64 {
        let n = 400_000usize;
        let h = x / n as f64;
        let mut acc = 0.5 * (1.0 + (-x * x).exp());
        for i in 1..n {
            let t = i as f64 * h;
            acc += (-t * t).exp();
        }
        acc * h * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn erf_matches_quadrature() {
        for &x in &[0.1, 0.5, 1.0, 1.9, 2.0, 2.1, 3.0, 4.5] {
            let q = erf_quadrature(x);
            assert!(
                (erf(x) - q).abs() < 1e-10,
                "erf({x}) = {} vs quadrature {q}",
                erf(x)
            );
            assert!((erf(-x) + q).abs() < 1e-10);
        }
    }

    #[test]
    fn erfc_complements() {
        for &x in &[-6.0, -2.5, -0.3, 0.0, 0.7, 2.0, 2.5, 6.0, 10.0] {
            let s: f64 = erf(x) + erfc(x);
            assert!((s - 1.0).abs() < 1e-14, "erf+erfc at {x} = {s}");
        }
        // far tail against the known asymptotic value
        let e = erfc(10.0f64);
        let asym = (-100.0f64).exp() / (10.0 * std::f64::consts::PI.sqrt());
        assert!((e / asym - 1.0).abs() < 1e-2);
    }

    #[test]
    fn normal_cdf_reference_points() {
        // classic table values
        assert!((normal_cdf(0.0f64) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(2.0f64) - 0.977_249_868_051_820_8).abs() < 1e-12);
        assert!((normal_cdf(-2.0f64) - 0.022_750_131_948_179_2).abs() < 1e-12);
    }

    #[test]
    fn xlnx_zero_limit() {
        assert_eq!(xlnx(0.0f64), 0.0);
        assert!((xlnx(1.0f64)).abs() < 1e-15);
        assert!((xlnx(0.5f64) + 0.5 * std::f64::consts::LN_2).abs() < 1e-15);
    }
}
