//! Lambert W on all branches, following the scheme of Corless et al.:
//! a branch-dependent initial guess refined by Halley's iteration.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{c, C64};

const EXPN1: f64 = 0.367_879_441_171_442_33;
const OMEGA: f64 = 0.567_143_290_409_783_87;
const MAX_ITER: usize = 50;

fn branch_point_series(z: C64) -> C64 {
    let p = (2.0 * (std::f64::consts::E * z + 1.0)).sqrt();
    -1.0 + p - p * p / 3.0 + p * p * p * (11.0 / 72.0)
}

fn pade_near_zero(z: C64) -> C64 {
    let num = ((z + 12.340_425_531_914_893_619_02) * z) + 12.851_063_829_787_234_042_55;
    let den = ((z + 14.340_425_531_914_893_617_02) * z) + 32.531_914_893_617_021_276_60;
    z * num / den
}

fn asymptotic(z: C64, k: i64) -> C64 {
    let w = z.ln() + c(0.0, 2.0 * std::f64::consts::PI * k as f64);
    w - w.ln()
}

/// Branch `k` of the Lambert W function, `W_k(z) e^{W_k(z)} = z`.
///
/// Branch cuts follow the usual convention: values on the negative real
/// axis are continuous from above.
pub fn lambert_w(k: i64, z: C64) -> Result<C64> {
    // a negative zero imaginary part would put ln(z) on the wrong side of the cut
    let z = Complex64::new(z.re, if z.im == 0.0 { 0.0 } else { z.im });
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::InvalidArgument(format!("Lambert W of non-finite argument {z}")));
    }
    if z == c(0.0, 0.0) {
        if k == 0 {
            return Ok(z);
        }
        return Err(Error::InvalidArgument(format!("W_{k}(0) is unbounded")));
    }
    if (k == 0 || k == -1) && (z + EXPN1).norm() < 1e-14 {
        return Err(Error::BranchPointSingularity { z });
    }
    if k == 0 && z == c(1.0, 0.0) {
        return Ok(c(OMEGA, 0.0));
    }
    let mut w = match k {
        0 if (z + EXPN1).norm() < 0.3 => branch_point_series(z),
        0 if z.re > -1.0 && z.re < 1.5 && z.im.abs() < 1.0 && -2.5 * z.im.abs() - 0.2 < z.re => pade_near_zero(z),
        -1 if z.norm() <= EXPN1 && z.im == 0.0 && z.re < 0.0 => c((-z.re).ln(), 0.0),
        _ => asymptotic(z, k),
    };
    let tol = 4.0 * f64::EPSILON;
    for _ in 0..MAX_ITER {
        let wn = if w.re >= 0.0 {
            // divide through by e^w to avoid overflow
            let f = w - z * (-w).exp();
            w - f / (w + 1.0 - (w + 2.0) * f / (2.0 * w + 2.0))
        } else {
            let ew = w.exp();
            let f = w * ew - z;
            w - f / (w * ew + ew - (w + 2.0) * f / (2.0 * w + 2.0))
        };
        if !wn.re.is_finite() || !wn.im.is_finite() {
            break;
        }
        let done = (wn - w).norm() <= tol * wn.norm();
        w = wn;
        if done {
            return Ok(w);
        }
    }
    if (w * w.exp() - z).norm() <= 1e-12 * z.norm() {
        return Ok(w);
    }
    Err(Error::NoConvergence { branch: k, z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn bisect_real(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn principal_branch_values() {
        assert_eq!(lambert_w(0, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        assert!((lambert_w(0, c(std::f64::consts::E, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        // Halley oracle on w e^w − 1 from w = 0.5
        let mut w: f64 = 0.5;
        for _ in 0..20 {
            let f = w * w.exp() - 1.0;
            let fp = (w + 1.0) * w.exp();
            w -= f / (fp - (w + 2.0) * f / (2.0 * w + 2.0));
        }
        let got = lambert_w(0, c(1.0, 0.0)).unwrap();
        assert!((got.re - w).abs() < 1e-14 && got.im == 0.0);
        assert!((got.re - 0.567_143_290_409_784).abs() < 1e-14);
    }

    #[test]
    fn lower_real_branch() {
        let oracle = bisect_real(|w| w * w.exp() + 0.1, -10.0, -1.0);
        let got = lambert_w(-1, c(-0.1, 0.0)).unwrap();
        assert!((got - c(oracle, 0.0)).norm() < 1e-12);
        assert!((got.re + 3.577_152).abs() < 1e-6);
    }

    #[test]
    fn reference_values_from_independent_implementation() {
        // values frozen from scipy.special.lambertw
        let cases = [
            (1, c(-0.5, 0.0), c(-2.772_069_015_153_082, 7.499_943_028_341_875_5)),
            (-2, c(-0.2, 0.0), c(-3.722_320_484_923_165, -7.387_230_210_574_593)),
            (0, c(-3.0, 0.0), c(0.466_997_857_925_660_23, 1.821_739_823_008_424_5)),
            (2, c(0.5, 0.0), c(-3.104_977_071_892_024_7, 10.713_483_311_301_25)),
        ];
        for (k, z, want) in cases {
            let got = lambert_w(k, z).unwrap();
            assert!((got - want).norm() < 1e-12 * want.norm(), "W_{k}({z}) = {got}, want {want}");
            assert!((got * got.exp() - z).norm() < 1e-13 * z.norm());
        }
    }

    #[test]
    fn branch_point_is_rejected() {
        assert!(matches!(lambert_w(0, c(-EXPN1, 0.0)), Err(Error::BranchPointSingularity { .. })));
        assert!(matches!(lambert_w(-1, c(-EXPN1, 0.0)), Err(Error::BranchPointSingularity { .. })));
        assert!(lambert_w(1, c(-EXPN1, 0.0)).is_ok());
        assert!(lambert_w(3, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn near_branch_point_accuracy() {
        for dz in [1e-12, 1e-8, 1e-4, 0.1] {
            for k in [0, -1] {
                for z in [c(-EXPN1 + dz, 0.0), c(-EXPN1 - dz, 0.0), c(-EXPN1, dz)] {
                    let w = lambert_w(k, z).unwrap();
                    assert!((w * w.exp() - z).norm() < 1e-12 * z.norm(), "k={k} z={z}");
                }
            }
        }
    }

    #[test]
    fn identity_on_annulus() {
        let mut g = SplitMix64::new(1234);
        for _ in 0..500 {
            let r = g.uniform_in(0.1, 10.0);
            let th = g.uniform_in(-std::f64::consts::PI, std::f64::consts::PI);
            let z = C64::from_polar(r, th);
            let vals: Vec<C64> = (-2..=2).map(|k| lambert_w(k, z).unwrap()).collect();
            for w in &vals {
                assert!((w * w.exp() - z).norm() < 1e-11 * z.norm());
            }
            for i in 0..vals.len() {
                for j in (i + 1)..vals.len() {
                    assert!((vals[i] - vals[j]).norm() > 1e-6);
                }
            }
        }
    }

    #[test]
    fn conjugate_symmetry_off_the_cut() {
        let z = c(0.7, 0.3);
        for k in -3..=3 {
            let a = lambert_w(k, z).unwrap();
            let b = lambert_w(-k, z.conj()).unwrap();
            assert!((a - b.conj()).norm() < 1e-12);
        }
    }
}
