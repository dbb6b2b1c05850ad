//! Random instances shared by unit tests.

use crate::linalg::{c, CMat, RMat, C64};
use crate::rng::SplitMix64;
use crate::sysmodel::StateSpaceFOM;

pub fn rmat(g: &mut SplitMix64, rows: usize, cols: usize) -> RMat {
    RMat::from_fn(rows, cols, |_, _| g.normal())
}

pub fn cmat(g: &mut SplitMix64, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(g.normal(), g.normal()))
}

pub fn cnum(g: &mut SplitMix64) -> C64 {
    c(g.normal(), g.normal())
}

/// Stable FOM with `A = Q − D`, `Q` skew and `D` positive diagonal.
pub fn stable_fom(g: &mut SplitMix64, n: usize, m: usize, p: usize) -> StateSpaceFOM {
    let q = rmat(g, n, n);
    let mut a = (&q - q.transpose()) * 0.5;
    for i in 0..n {
        a[(i, i)] -= g.uniform_in(0.2, 2.0);
    }
    StateSpaceFOM::new(None, a, rmat(g, n, m), rmat(g, p, n), None).unwrap()
}

/// `1/(s + a)` as a one-state model.
pub fn first_order(a: f64) -> StateSpaceFOM {
    let one = RMat::from_element(1, 1, 1.0);
    StateSpaceFOM::new(None, RMat::from_element(1, 1, -a), one.clone(), one, None).unwrap()
}

/// Pole-residue model with random stable complex poles.
pub fn random_pole_residue(g: &mut SplitMix64, r: usize, m: usize, p: usize) -> crate::sysmodel::DiagonalStructuredROM {
    let poles: Vec<C64> = (0..r).map(|_| c(-g.uniform_in(0.3, 3.0), g.uniform_in(-3.0, 3.0))).collect();
    crate::sysmodel::DiagonalStructuredROM::pole_residue(&poles, cmat(g, r, m), cmat(g, p, r)).unwrap()
}

/// pH model with `R = GGᵀ + shift·I`.
pub fn random_ph(g: &mut SplitMix64, n: usize, m: usize, shift: f64) -> crate::sysmodel::PHModel {
    let q = rmat(g, n, n);
    let gm = rmat(g, n, n);
    crate::sysmodel::PHModel::new((&q - q.transpose()) * 0.5, &gm * gm.transpose() + RMat::identity(n, n) * shift, rmat(g, n, m))
        .unwrap()
}
