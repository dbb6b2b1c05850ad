//! Roots, Lambert W, delay poles and residues at simple zeros.

mod lambert;

pub use lambert::lambert_w;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::scalarfun::CoefficientFunction;

/// Zeros of one denominator `a_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSet {
    pub index: usize,
    pub poles: Vec<C64>,
    /// Lambert W branch of each pole; zero for rational denominators.
    pub branches: Vec<i64>,
    /// Branch window the set was enumerated with.
    pub window: usize,
    /// Magnitude of the outermost branch contribution, zero when exact.
    pub tail: f64,
}

impl PoleSet {
    /// Rational pole set, sorted by real then imaginary part.
    pub fn rational(index: usize, poles: Vec<C64>) -> Self {
        let order = linalg::sorted_order(&poles);
        let poles: Vec<C64> = order.iter().map(|&i| poles[i]).collect();
        let branches = vec![0; poles.len()];
        PoleSet { index, poles, branches, window: 0, tail: 0.0 }
    }
}

/// Roots of `Σ coeffs[i] s^{deg−i}` (highest degree first) from the
/// eigenvalues of the companion matrix, polished by one Newton step.
pub fn polynomial_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    if coeffs.len() < 2 {
        return Err(Error::InvalidArgument("polynomial degree must be at least 1".into()));
    }
    let norm: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if coeffs[0].norm() <= 1e-14 * norm {
        return Err(Error::DegenerateLeadingCoefficient);
    }
    let deg = coeffs.len() - 1;
    let mut comp = CMat::zeros(deg, deg);
    for j in 0..deg {
        comp[(0, j)] = -coeffs[j + 1] / coeffs[0];
    }
    for i in 1..deg {
        comp[(i, i - 1)] = c(1.0, 0.0);
    }
    let raw = linalg::eigenvalues(&comp)?;
    let roots: Vec<C64> = raw
        .into_iter()
        .map(|z| {
            let (p, dp) = horner(coeffs, z);
            if dp.norm() > 0.0 {
                let step = p / dp;
                let cand = z - step;
                if horner(coeffs, cand).0.norm() < p.norm() {
                    return cand;
                }
            }
            z
        })
        .collect();
    let order = linalg::sorted_order(&roots);
    Ok(order.iter().map(|&i| roots[i]).collect())
}

/// Value and derivative of a polynomial by Horner's rule.
pub fn horner(coeffs: &[C64], s: C64) -> (C64, C64) {
    let mut p = c(0.0, 0.0);
    let mut dp = c(0.0, 0.0);
    for &a in coeffs {
        dp = dp * s + p;
        p = p * s + a;
    }
    (p, dp)
}

/// Parameters of the scalar characteristic function `s − μ − σ e^{−τs}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayDenominator {
    pub mu: C64,
    pub sigma: C64,
    pub tau: f64,
}

impl DelayDenominator {
    pub fn eval(&self, s: C64) -> C64 {
        s - self.mu - self.sigma * (-s * self.tau).exp()
    }

    pub fn derivative(&self, s: C64) -> C64 {
        1.0 + self.sigma * self.tau * (-s * self.tau).exp()
    }

    /// The Lambert W argument `τσ e^{−τμ}`.
    pub fn lambert_argument(&self) -> C64 {
        self.sigma * self.tau * (-self.mu * self.tau).exp()
    }

    /// Branch labels making up a conjugation-closed window of size `J`.
    ///
    /// For a negative real argument `W_k` pairs with `W_{−k−1}`, so the
    /// window is shifted by one to stay closed under conjugation.
    pub fn branch_labels(&self, window: usize) -> Vec<i64> {
        let j = window as i64;
        let z = self.lambert_argument();
        let lo = if z.im == 0.0 && z.re < 0.0 { -j - 1 } else { -j };
        (lo..=j).collect()
    }

    /// Pole on branch `k`, polished by Newton's method.
    pub fn pole(&self, k: i64) -> Result<C64> {
        let w = lambert_w(k, self.lambert_argument())?;
        let mut lam = self.mu + w / self.tau;
        for _ in 0..3 {
            let d = self.derivative(lam);
            if d.norm() == 0.0 {
                break;
            }
            let step = self.eval(lam) / d;
            if !(step.norm() > 1e-16 * lam.norm()) {
                break;
            }
            lam -= step;
        }
        let scale = 1.0 + self.mu.norm() + lam.norm();
        let res = self.eval(lam).norm();
        if res > 1e-10 * scale {
            return Err(Error::NoConvergence { branch: k, z: self.lambert_argument() });
        }
        if self.derivative(lam).norm() <= 1e-10 * (1.0 + lam.norm()) {
            return Err(Error::NotASimpleZero { c: lam });
        }
        Ok(lam)
    }
}

/// Poles `λ_j = μ + W_j(τσ e^{−τμ})/τ` of `s − μ − σ e^{−τs}` on branches
/// `|j| ≤ J` (see [`DelayDenominator::branch_labels`]).
pub fn delay_poles(mu: C64, sigma: C64, tau: f64, window: usize) -> Result<PoleSet> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("delay must be positive, got {tau}")));
    }
    if sigma == c(0.0, 0.0) {
        if mu.re >= 0.0 {
            return Err(Error::UnstablePole(mu));
        }
        return Ok(PoleSet { index: 0, poles: vec![mu], branches: vec![0], window, tail: 0.0 });
    }
    let den = DelayDenominator { mu, sigma, tau };
    let mut pairs = Vec::new();
    for k in den.branch_labels(window) {
        let lam = den.pole(k)?;
        if lam.re >= 0.0 {
            return Err(Error::UnstablePole(lam));
        }
        pairs.push((lam, k));
    }
    let vals: Vec<C64> = pairs.iter().map(|p| p.0).collect();
    let order = linalg::sorted_order(&vals);
    let tail = pairs
        .iter()
        .filter(|(_, k)| k.unsigned_abs() as usize >= window)
        .map(|(l, _)| (1.0 / (1.0 + tau * (l - mu))).norm())
        .fold(0.0, f64::max);
    Ok(PoleSet {
        index: 0,
        poles: order.iter().map(|&i| pairs[i].0).collect(),
        branches: order.iter().map(|&i| pairs[i].1).collect(),
        window,
        tail,
    })
}

/// A scalar analytic function with its first two derivatives.
pub trait Analytic {
    fn value(&self, s: C64) -> C64;
    fn d1(&self, s: C64) -> C64;
    fn d2(&self, s: C64) -> C64;
}

impl Analytic for CoefficientFunction {
    fn value(&self, s: C64) -> C64 {
        self.eval(s)
    }
    fn d1(&self, s: C64) -> C64 {
        self.derivative().eval(s)
    }
    fn d2(&self, s: C64) -> C64 {
        self.derivative().derivative().eval(s)
    }
}

/// Closure-backed [`Analytic`] function.
pub struct AnalyticFn<F, D1, D2> {
    pub f: F,
    pub df: D1,
    pub d2f: D2,
}

impl<F, D1, D2> Analytic for AnalyticFn<F, D1, D2>
where
    F: Fn(C64) -> C64,
    D1: Fn(C64) -> C64,
    D2: Fn(C64) -> C64,
{
    fn value(&self, s: C64) -> C64 {
        (self.f)(s)
    }
    fn d1(&self, s: C64) -> C64 {
        (self.df)(s)
    }
    fn d2(&self, s: C64) -> C64 {
        (self.d2f)(s)
    }
}

fn check_simple_zero(h: &dyn Analytic, at: C64) -> Result<C64> {
    let hp = h.d1(at);
    let hv = h.value(at);
    if !(hp.norm() > 1e-10 * (1.0 + at.norm())) || hv.norm() > 1e-10 * (1.0 + hp.norm() * (1.0 + at.norm())) {
        return Err(Error::NotASimpleZero { c: at });
    }
    Ok(hp)
}

/// `Res(g/h, c) = g(c)/h'(c)` at a simple zero `c` of `h`.
pub fn residue_simple(g: &dyn Analytic, h: &dyn Analytic, at: C64) -> Result<C64> {
    let hp = check_simple_zero(h, at)?;
    Ok(g.value(at) / hp)
}

/// `Res(g/h², c) = g'(c)/h'(c)² − g(c)h''(c)/h'(c)³` at a simple zero `c` of `h`.
pub fn residue_double(g: &dyn Analytic, h: &dyn Analytic, at: C64) -> Result<C64> {
    let hp = check_simple_zero(h, at)?;
    Ok(g.d1(at) / (hp * hp) - g.value(at) * h.d2(at) / (hp * hp * hp))
}
