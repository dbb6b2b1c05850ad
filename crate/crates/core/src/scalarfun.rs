//! Scalar coefficient functions `α(s)` used in parameter-separable models.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, C64};

/// An entire function of `s` from a small closed algebra.
///
/// Linear combinations are kept flat: their terms are never themselves
/// linear combinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Repr", into = "Repr")]
pub enum CoefficientFunction {
    Constant(C64),
    /// `s^k`
    Monomial(u32),
    /// `e^{-τ s}`
    ExpDelay(f64),
    LinearCombination(Vec<(C64, CoefficientFunction)>),
}

use CoefficientFunction as F;

impl CoefficientFunction {
    pub fn constant(v: C64) -> Self {
        F::Constant(v)
    }

    pub fn real(v: f64) -> Self {
        F::Constant(c(v, 0.0))
    }

    pub fn one() -> Self {
        F::real(1.0)
    }

    pub fn monomial(k: u32) -> Self {
        F::Monomial(k)
    }

    pub fn exp_delay(tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("delay must be positive, got {tau}")));
        }
        Ok(F::ExpDelay(tau))
    }

    /// Build a flat linear combination; nested combinations are expanded.
    pub fn linear_combination(terms: Vec<(C64, CoefficientFunction)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("empty linear combination".into()));
        }
        let mut flat = Vec::with_capacity(terms.len());
        for (w, f) in terms {
            push_flat(&mut flat, w, f);
        }
        if flat.is_empty() {
            return Err(Error::InvalidArgument("empty linear combination".into()));
        }
        Ok(F::LinearCombination(flat))
    }

    pub fn eval(&self, s: C64) -> C64 {
        match self {
            F::Constant(v) => *v,
            F::Monomial(k) => s.powu(*k),
            F::ExpDelay(tau) => (-s * *tau).exp(),
            F::LinearCombination(terms) => terms.iter().map(|(w, f)| w * f.eval(s)).sum(),
        }
    }

    pub fn derivative(&self) -> CoefficientFunction {
        match self {
            F::Constant(_) | F::Monomial(0) => F::Constant(c(0.0, 0.0)),
            F::Monomial(k) => F::LinearCombination(vec![(c(*k as f64, 0.0), F::Monomial(k - 1))]),
            F::ExpDelay(tau) => F::LinearCombination(vec![(c(-tau, 0.0), F::ExpDelay(*tau))]),
            F::LinearCombination(terms) => {
                let mut flat = Vec::new();
                for (w, f) in terms {
                    let d = f.derivative();
                    if d == F::Constant(c(0.0, 0.0)) {
                        continue;
                    }
                    push_flat(&mut flat, *w, d);
                }
                if flat.is_empty() {
                    F::Constant(c(0.0, 0.0))
                } else {
                    F::LinearCombination(flat)
                }
            }
        }
    }

    /// Coefficients (highest degree first) when `f` is a polynomial, with
    /// exactly-zero leading coefficients removed.
    pub fn polynomial_coefficients(&self) -> Option<Vec<C64>> {
        let mut low_first: Vec<C64> = Vec::new();
        let mut add = |k: u32, w: C64| {
            let k = k as usize;
            if low_first.len() <= k {
                low_first.resize(k + 1, c(0.0, 0.0));
            }
            low_first[k] += w;
        };
        match self {
            F::Constant(v) => add(0, *v),
            F::Monomial(k) => add(*k, c(1.0, 0.0)),
            F::ExpDelay(_) => return None,
            F::LinearCombination(terms) => {
                for (w, f) in terms {
                    match f {
                        F::Constant(v) => add(0, w * v),
                        F::Monomial(k) => add(*k, *w),
                        _ => return None,
                    }
                }
            }
        }
        while low_first.len() > 1 && low_first.last() == Some(&c(0.0, 0.0)) {
            low_first.pop();
        }
        low_first.reverse();
        Some(low_first)
    }

    /// The function `s ↦ conj(f(conj(s)))`.
    pub fn conj_flip(&self) -> CoefficientFunction {
        match self {
            F::Constant(v) => F::Constant(v.conj()),
            F::Monomial(k) => F::Monomial(*k),
            F::ExpDelay(tau) => F::ExpDelay(*tau),
            F::LinearCombination(terms) => {
                F::LinearCombination(terms.iter().map(|(w, f)| (w.conj(), f.conj_flip())).collect())
            }
        }
    }
}

fn push_flat(out: &mut Vec<(C64, CoefficientFunction)>, w: C64, f: CoefficientFunction) {
    match f {
        F::LinearCombination(inner) => {
            for (wi, fi) in inner {
                push_flat(out, w * wi, fi);
            }
        }
        other => out.push((w, other)),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ReIm {
    re: f64,
    im: f64,
}

impl From<C64> for ReIm {
    fn from(z: C64) -> Self {
        ReIm { re: z.re, im: z.im }
    }
}

impl From<ReIm> for C64 {
    fn from(z: ReIm) -> Self {
        Complex64::new(z.re, z.im)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Repr {
    Constant(ReIm),
    Monomial(u32),
    ExpDelay(f64),
    LinComb(Vec<(ReIm, Repr)>),
}

impl From<CoefficientFunction> for Repr {
    fn from(f: CoefficientFunction) -> Self {
        match f {
            F::Constant(v) => Repr::Constant(v.into()),
            F::Monomial(k) => Repr::Monomial(k),
            F::ExpDelay(t) => Repr::ExpDelay(t),
            F::LinearCombination(terms) => {
                Repr::LinComb(terms.into_iter().map(|(w, g)| (w.into(), g.into())).collect())
            }
        }
    }
}

impl TryFrom<Repr> for CoefficientFunction {
    type Error = Error;

    fn try_from(r: Repr) -> Result<Self> {
        Ok(match r {
            Repr::Constant(v) => F::Constant(v.into()),
            Repr::Monomial(k) => F::Monomial(k),
            Repr::ExpDelay(t) => F::exp_delay(t)?,
            Repr::LinComb(terms) => F::linear_combination(
                terms
                    .into_iter()
                    .map(|(w, g)| Ok((w.into(), CoefficientFunction::try_from(g)?)))
                    .collect::<Result<Vec<_>>>()?,
            )?,
        })
    }
}
