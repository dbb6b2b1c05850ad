//! Wirtinger gradients of the squared H2 error with respect to the matrices
//! of a parameter-separable reduced model.
//!
//! With `X = Â⁻¹B̂`, `X_d = Â⁻*Ĉ*` and `E = H − Ĥ` at `s = iω`:
//!
//! * `∇_{conj Â_i} J = ∫ conj(α_i) X_d E X* dμ`
//! * `∇_{conj B̂_j} J = ∫ conj(β_j) X_d (Ĥ − H) dμ`
//! * `∇_{conj Ĉ_k} J = ∫ conj(γ_k) (Ĥ − H) X* dμ`
//!
//! with `dμ = dω/2π`. The derivative with respect to a real parameter is
//! twice the real part of the matching Wirtinger gradient.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::h2metric::{self, FrequencyGrid};
use crate::linalg::{c, compensated_sum_f64, CMat, Lu, MatrixSum, RMat, C64};
use crate::par;
use crate::sysmodel::{PHModel, ParamSepModel, TransferEvaluator};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Gradients for every term of a [`ParamSepModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub d_a: Vec<CMat>,
    pub d_b: Vec<CMat>,
    pub d_c: Vec<CMat>,
    /// `J` on the same grid.
    pub cost: f64,
    pub grid_nodes: usize,
    pub grid_scale: f64,
}

impl GradientBundle {
    /// Frobenius norm over all gradient matrices.
    pub fn norm(&self) -> f64 {
        self.d_a.iter().chain(&self.d_b).chain(&self.d_c).map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }
}

/// Per-node solution data shared by the gradient and condition paths.
pub(crate) struct NodeState {
    /// `Â(s)⁻¹ B̂(s)`
    pub x: CMat,
    /// `Â(s)⁻* Ĉ(s)*`
    pub xd: CMat,
    /// `H(s) − Ĥ(s)`
    pub err: CMat,
}

pub(crate) fn node_state(h_at: &CMat, rom: &ParamSepModel, s: C64) -> Result<NodeState> {
    let a = rom.a_at(s);
    let lu = Lu::factor(&a).map_err(|_| Error::SingularAtPoint(s))?;
    let b = rom.b_at(s);
    let cm = rom.c_at(s);
    let x = lu.solve(&b);
    let xd = lu.solve_adjoint(&cm.adjoint());
    let err = h_at - &cm * &x;
    Ok(NodeState { x, xd, err })
}

fn check_shapes(h: &dyn TransferEvaluator, rom: &ParamSepModel) -> Result<()> {
    if h.inputs() != rom.inputs() || h.outputs() != rom.outputs() {
        return Err(Error::Dimension("FOM and ROM transfer shapes differ".into()));
    }
    Ok(())
}

/// Quadrature approximation of all three gradient families.
pub fn gradients(h: &dyn TransferEvaluator, rom: &ParamSepModel, grid: &FrequencyGrid) -> Result<GradientBundle> {
    check_shapes(h, rom)?;
    gradients_with(|k| h.eval(c(0.0, grid.nodes[k])), rom, grid)
}

/// As [`gradients`] with `H` already sampled on `grid`.
pub fn gradients_sampled(samples: &[CMat], rom: &ParamSepModel, grid: &FrequencyGrid) -> Result<GradientBundle> {
    if samples.len() != grid.len() {
        return Err(Error::Dimension("sample count does not match the grid".into()));
    }
    gradients_with(|k| Ok(samples[k].clone()), rom, grid)
}

struct NodeContribution {
    d_a: Vec<CMat>,
    d_b: Vec<CMat>,
    d_c: Vec<CMat>,
    sq: f64,
}

fn gradients_with<F>(h_at: F, rom: &ParamSepModel, grid: &FrequencyGrid) -> Result<GradientBundle>
where
    F: Fn(usize) -> Result<CMat> + Sync + Send,
{
    let parts: Vec<NodeContribution> = par::map_indexed(grid.len(), |k| {
        let s = c(0.0, grid.nodes[k]);
        let st = node_state(&h_at(k)?, rom, s)?;
        let core = &st.xd * &st.err;
        let d_a = rom.a_terms.iter().map(|(f, _)| &core * st.x.adjoint() * f.eval(s).conj()).collect();
        let d_b = rom.b_terms.iter().map(|(f, _)| &core * (-f.eval(s).conj())).collect();
        let ex = &st.err * st.x.adjoint();
        let d_c = rom.c_terms.iter().map(|(f, _)| &ex * (-f.eval(s).conj())).collect();
        Ok(NodeContribution { d_a, d_b, d_c, sq: st.err.norm_squared() })
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let sum_family = |terms: &[(crate::scalarfun::CoefficientFunction, CMat)], pick: &dyn Fn(&NodeContribution) -> &Vec<CMat>| {
        terms
            .iter()
            .enumerate()
            .map(|(i, (_, m))| {
                let mut acc = MatrixSum::new(m.nrows(), m.ncols());
                for (part, w) in parts.iter().zip(&grid.weights) {
                    acc.add_scaled(&pick(part)[i], c(w / TWO_PI, 0.0));
                }
                acc.value()
            })
            .collect::<Vec<CMat>>()
    };
    let d_a = sum_family(&rom.a_terms, &|p| &p.d_a);
    let d_b = sum_family(&rom.b_terms, &|p| &p.d_b);
    let d_c = sum_family(&rom.c_terms, &|p| &p.d_c);
    let cost = compensated_sum_f64(parts.iter().zip(&grid.weights).map(|(p, w)| w * p.sq)) / TWO_PI;
    Ok(GradientBundle { d_a, d_b, d_c, cost, grid_nodes: grid.len(), grid_scale: grid.half_width })
}

/// Keep only the diagonals of the `Â_i` gradients.
pub fn diag_restrict(bundle: &GradientBundle) -> GradientBundle {
    let mut out = bundle.clone();
    for m in &mut out.d_a {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i != j {
                    m[(i, j)] = c(0.0, 0.0);
                }
            }
        }
    }
    out
}

/// Real gradients of `J` for a pH model `Bᵀ(sI − (J − R))⁻¹B`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhGradient {
    /// Derivative with respect to the unstructured matrix `A = J − R`.
    pub d_jr: RMat,
    /// Derivative with respect to `B`, which appears in both input and output.
    pub d_b: RMat,
    pub cost: f64,
}

pub fn ph_gradient(h: &dyn TransferEvaluator, model: &PHModel, grid: &FrequencyGrid) -> Result<PhGradient> {
    let ps = model.to_param_sep();
    let g = gradients(h, &ps, grid)?;
    Ok(ph_gradient_from_bundle(&g))
}

/// Chain rule from the bundle of `[(s, I), (−1, J − R)]`, `B`, `Bᵀ`.
pub fn ph_gradient_from_bundle(g: &GradientBundle) -> PhGradient {
    // Â₂ = J − R enters with coefficient −1; the bundle already carries it
    let d_jr = g.d_a[1].map(|z| 2.0 * z.re);
    let d_b = g.d_b[0].map(|z| 2.0 * z.re) + g.d_c[0].transpose().map(|z| 2.0 * z.re);
    PhGradient { d_jr, d_b, cost: g.cost }
}

/// Which matrix family a finite-difference record refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    A,
    B,
    C,
}

/// Analytic vs five-point finite-difference derivative of one entry.
#[derive(Debug, Clone, Serialize)]
pub struct FdRecord {
    pub family: Family,
    pub term: usize,
    pub row: usize,
    pub col: usize,
    /// `(∂/∂x + i∂/∂y) J / 2` from the analytic gradient.
    pub analytic: C64,
    pub finite_difference: C64,
    pub relative_error: f64,
}

/// Five-point central difference of `f` at 0 with step `h`.
pub fn five_point(f: impl Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((-f(2.0 * h)? + 8.0 * f(h)? - 8.0 * f(-h)? + f(-2.0 * h)?) / (12.0 * h))
}

/// Relative error with an absolute floor tied to the largest entry.
pub fn relative_error(a: C64, b: C64, floor: f64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(floor).max(1e-300)
}

/// Compare every entry of the Wirtinger gradients with finite differences
/// of `J` on the same grid.
pub fn finite_difference_check(
    h: &dyn TransferEvaluator,
    rom: &ParamSepModel,
    grid: &FrequencyGrid,
    step: f64,
) -> Result<Vec<FdRecord>> {
    check_shapes(h, rom)?;
    let samples = h2metric::sample(h, grid)?;
    let g = gradients_sampled(&samples, rom, grid)?;
    let cost = |m: &ParamSepModel| -> Result<f64> { Ok(h2metric::h2_error_sampled(&samples, m, grid)?.value) };
    let mut coords = Vec::new();
    for (fam, terms, grads) in [
        (Family::A, &rom.a_terms, &g.d_a),
        (Family::B, &rom.b_terms, &g.d_b),
        (Family::C, &rom.c_terms, &g.d_c),
    ] {
        for (t, (_, m)) in terms.iter().enumerate() {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    coords.push((fam, t, i, j, grads[t][(i, j)]));
                }
            }
        }
    }
    let floor = 1e-8 * coords.iter().map(|x| x.4.norm()).fold(0.0, f64::max);
    let records: Vec<Result<FdRecord>> = par::map_chunked(coords.len(), 1, |n| {
        let (fam, t, i, j, analytic) = coords[n];
        let perturbed = |dz: C64| {
            let mut m = rom.clone();
            let terms = match fam {
                Family::A => &mut m.a_terms,
                Family::B => &mut m.b_terms,
                Family::C => &mut m.c_terms,
            };
            terms[t].1[(i, j)] += dz;
            m
        };
        let base = match fam {
            Family::A => rom.a_terms[t].1[(i, j)],
            Family::B => rom.b_terms[t].1[(i, j)],
            Family::C => rom.c_terms[t].1[(i, j)],
        };
        let hstep = step * (1.0 + base.norm());
        let dx = five_point(|e| cost(&perturbed(c(e, 0.0))), hstep)?;
        let dy = five_point(|e| cost(&perturbed(c(0.0, e))), hstep)?;
        let fd = c(dx, dy) * 0.5;
        Ok(FdRecord { family: fam, term: t, row: i, col: j, analytic, finite_difference: fd, relative_error: relative_error(analytic, fd, floor) })
    });
    records.into_iter().collect()
}
