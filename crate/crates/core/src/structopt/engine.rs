//! Cost and gradient of `J(θ)` on a fixed frequency grid.
//!
//! The FOM is sampled once. All structures are evaluated in a diagonal
//! form `Ĥ(s) = Σ c_ℓ b_ℓ*/a_ℓ(s)` (pH models in the eigenbasis of `J − R`),
//! so a node costs `O(r·p·m)` and no linear solves.

use crate::error::{Error, Result};
use crate::h2metric::{self, FrequencyGrid};
use crate::linalg::{c, to_complex, CMat, RMat, C64};
use crate::par;
use crate::sysmodel::TransferEvaluator;
use crate::wirtinger;

use super::{modal_basis, ModelGradient, Parameterization, Rom, Structure};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Cost and gradient at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    pub gradient: Vec<f64>,
}

impl Evaluation {
    pub fn grad_norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// One coordinate of [`Objective::gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CoordinateCheck {
    pub coordinate: usize,
    pub analytic: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
    /// Round-off level of the difference quotient, `100·ε·J/h`.
    pub resolution: f64,
}

impl CoordinateCheck {
    /// Relative agreement within `tol`, or agreement below what the
    /// difference quotient can resolve (as near a stationary point).
    pub fn passed(&self, tol: f64) -> bool {
        self.relative_error < tol || (self.analytic - self.finite_difference).abs() <= self.resolution
    }
}

/// Squared H2 error of a structured ROM against a sampled FOM.
pub struct Objective {
    grid: FrequencyGrid,
    p: usize,
    m: usize,
    /// `H(iω_k)` column-major, node after node.
    h: Vec<C64>,
    samples: Vec<CMat>,
    /// `w_k / 2π`
    weights: Vec<f64>,
    /// Coefficient functions of the diagonal form at every node.
    alpha: Vec<Vec<C64>>,
}

fn term_values(structure: Structure, tau: Option<f64>, s: C64) -> Vec<C64> {
    match structure {
        Structure::Unstructured | Structure::PortHamiltonian => vec![s, c(-1.0, 0.0)],
        Structure::SecondOrder => vec![s * s, s, c(1.0, 0.0)],
        Structure::Delay => vec![s, c(-1.0, 0.0), -(-s * tau.expect("delay parameterization has a delay")).exp()],
    }
}

/// Diagonal data `d_i[ℓ]`, `B̂` and `Ĉ`.
struct Diagonal {
    d: Vec<Vec<C64>>,
    b: CMat,
    c: CMat,
}

struct Sums {
    cost: (f64, f64),
    d_a: Vec<Vec<C64>>,
    d_b: Vec<C64>,
    d_c: Vec<C64>,
    /// `∫ conj(1/a_i) (c_i* E b_j) conj(1/a_j) dμ`, pH only
    k: Vec<C64>,
}

impl Sums {
    fn zeros(q: usize, r: usize, m: usize, p: usize, full: bool) -> Self {
        Sums {
            cost: (0.0, 0.0),
            d_a: vec![vec![c(0.0, 0.0); r]; q],
            d_b: vec![c(0.0, 0.0); r * m],
            d_c: vec![c(0.0, 0.0); p * r],
            k: if full { vec![c(0.0, 0.0); r * r] } else { Vec::new() },
        }
    }

    fn merge(&mut self, o: &Sums) {
        self.cost.0 += o.cost.0;
        self.cost.1 += o.cost.1;
        for (a, b) in self.d_a.iter_mut().zip(&o.d_a) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.d_b.iter_mut().zip(&o.d_b).for_each(|(x, y)| *x += y);
        self.d_c.iter_mut().zip(&o.d_c).for_each(|(x, y)| *x += y);
        self.k.iter_mut().zip(&o.k).for_each(|(x, y)| *x += y);
    }
}

#[inline]
fn two_sum(acc: &mut (f64, f64), x: f64) {
    let t = acc.0 + x;
    if acc.0.abs() >= x.abs() {
        acc.1 += (acc.0 - t) + x;
    } else {
        acc.1 += (x - t) + acc.0;
    }
    acc.0 = t;
}

impl Objective {
    pub fn new(h: &dyn TransferEvaluator, param: &Parameterization, grid: FrequencyGrid) -> Result<Self> {
        if h.inputs() != param.m || h.outputs() != param.p {
            return Err(Error::Dimension("FOM shape does not match the parameterization".into()));
        }
        let samples = h2metric::sample(h, &grid)?;
        Self::from_samples(samples, param, grid)
    }

    pub fn from_samples(samples: Vec<CMat>, param: &Parameterization, grid: FrequencyGrid) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::Dimension("sample count does not match the grid".into()));
        }
        let (p, m) = (param.p, param.m);
        if samples.iter().any(|s| s.shape() != (p, m)) {
            return Err(Error::Dimension("sample shape does not match the parameterization".into()));
        }
        let h = samples.iter().flat_map(|s| s.iter().copied()).collect();
        let weights = grid.weights.iter().map(|w| w / TWO_PI).collect();
        let n = grid.len();
        let q = term_values(param.structure, param.tau, c(0.0, 0.0)).len();
        let mut alpha = vec![vec![c(0.0, 0.0); n]; q];
        for (k, w) in grid.nodes.iter().enumerate() {
            for (i, v) in term_values(param.structure, param.tau, c(0.0, *w)).into_iter().enumerate() {
                alpha[i][k] = v;
            }
        }
        Ok(Objective { grid, p, m, h, samples, weights, alpha })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[CMat] {
        &self.samples
    }

    /// Cost and gradient, or `None` where `θ` does not give a usable model.
    pub fn evaluate(&self, param: &Parameterization, theta: &[f64]) -> Option<Evaluation> {
        let rom = param.unpack(theta).ok()?;
        let (cost, g) = self.model_gradient(&rom).ok()?;
        let gradient = param.chain(theta, &g);
        if !cost.is_finite() || gradient.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some(Evaluation { cost, gradient })
    }

    /// The same quantities through the general Wirtinger gradient of the
    /// parameter-separable form.
    pub fn evaluate_general(&self, param: &Parameterization, theta: &[f64]) -> Result<Evaluation> {
        let rom = param.unpack(theta)?;
        let bundle = wirtinger::gradients_sampled(&self.samples, &rom.to_param_sep(), &self.grid)?;
        let g = rom.model_gradient(&bundle);
        Ok(Evaluation { cost: bundle.cost, gradient: param.chain(theta, &g) })
    }

    /// Analytic `∂J/∂θ_k` against a five-point difference with step
    /// `step·(1 + |θ_k|)`, one record per coordinate.
    pub fn gradient_check(&self, param: &Parameterization, theta: &[f64], step: f64) -> Result<Vec<CoordinateCheck>> {
        let e = self
            .evaluate(param, theta)
            .ok_or_else(|| Error::InvalidArgument("parameters do not give a feasible model".into()))?;
        let floor = 1e-8 * e.grad_norm();
        let rows: Vec<Result<CoordinateCheck>> = par::map_chunked(theta.len(), 1, |k| {
            let h = step * (1.0 + theta[k].abs());
            let fd = wirtinger::five_point(
                |d| {
                    let mut t = theta.to_vec();
                    t[k] += d;
                    self.evaluate(param, &t)
                        .map(|e| e.cost)
                        .ok_or_else(|| Error::InvalidArgument(format!("coordinate {k} leaves the feasible set")))
                },
                h,
            )?;
            let analytic = e.gradient[k];
            let relative_error = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(floor).max(1e-300);
            let resolution = 100.0 * f64::EPSILON * e.cost / h;
            Ok(CoordinateCheck { coordinate: k, analytic, finite_difference: fd, relative_error, resolution })
        });
        rows.into_iter().collect()
    }

    /// `J` alone, by direct evaluation of the ROM at every node.
    pub fn cost_direct(&self, rom: &Rom) -> Result<f64> {
        Ok(h2metric::h2_error_sampled(&self.samples, rom, &self.grid)?.value)
    }

    pub(crate) fn model_gradient(&self, rom: &Rom) -> Result<(f64, ModelGradient)> {
        match rom {
            Rom::Unstructured { rom: d, .. } => {
                let poles = d.first_order_poles().expect("pole-residue model");
                let diag = Diagonal { d: vec![vec![c(1.0, 0.0); poles.len()], poles], b: d.b.clone(), c: d.c.clone() };
                Ok(self.diagonal(&diag, false).into_gradient())
            }
            Rom::Delay(d) => {
                let diag = Diagonal { d: vec![vec![c(1.0, 0.0); d.order()], d.mu.clone(), d.sigma.clone()], b: d.b.clone(), c: d.c.clone() };
                Ok(self.diagonal(&diag, false).into_gradient())
            }
            Rom::SecondOrder(so) => {
                let re = |v: &[f64]| v.iter().map(|x| c(*x, 0.0)).collect();
                let diag = Diagonal {
                    d: vec![vec![c(1.0, 0.0); so.order()], re(&so.e), re(&so.k)],
                    b: to_complex(&so.b),
                    c: to_complex(&so.c),
                };
                Ok(self.diagonal(&diag, false).into_gradient())
            }
            Rom::PortHamiltonian(ph) => {
                let a = ph.system_matrix();
                match modal_basis(&a) {
                    Some((lambda, t, tinv)) => Ok(self.ph_modal(ph.b.clone(), lambda, &t, &tinv)),
                    None => {
                        let bundle = wirtinger::gradients_sampled(&self.samples, &ph.to_param_sep(), &self.grid)?;
                        Ok((bundle.cost, rom.model_gradient(&bundle)))
                    }
                }
            }
        }
    }

    fn ph_modal(&self, b: RMat, lambda: Vec<C64>, t: &CMat, tinv: &CMat) -> (f64, ModelGradient) {
        let r = lambda.len();
        let bc = to_complex(&b);
        let diag = Diagonal { d: vec![vec![c(1.0, 0.0); r], lambda], b: tinv * &bc, c: bc.transpose() * t };
        let out = self.diagonal(&diag, true);
        let kmat = CMat::from_column_slice(r, r, &out.sums.k);
        let tinv_adj = tinv.adjoint();
        // ∇_{conj A} = −T^{-*} K T*, ∇_{conj B} = T^{-*} G_B̃, ∇_{conj C} = G_C̃ T*
        let ga = -(&tinv_adj * kmat * t.adjoint());
        let gb = &tinv_adj * &out.d_b;
        let gc = &out.d_c * t.adjoint();
        let d_a = ga.map(|z| 2.0 * z.re);
        let d_b = gb.map(|z| 2.0 * z.re) + gc.transpose().map(|z| 2.0 * z.re);
        (out.cost, ModelGradient::Dense { d_a, d_b })
    }

    fn diagonal(&self, diag: &Diagonal, full: bool) -> DiagonalOutput {
        let (p, m) = (self.p, self.m);
        let r = diag.b.nrows();
        let q = diag.d.len();
        let n = self.grid.len();
        let chunks = (par::thread_count() * 4).clamp(1, n.div_ceil(256).max(1));
        let per = n.div_ceil(chunks);
        let parts = par::map_chunked(chunks, 1, |ci| {
            let lo = ci * per;
            let hi = ((ci + 1) * per).min(n);
            self.diagonal_range(diag, full, lo, hi)
        });
        let mut sums = Sums::zeros(q, r, m, p, full);
        for part in &parts {
            sums.merge(part);
        }
        let d_b = CMat::from_row_slice(r, m, &sums.d_b);
        let d_c = CMat::from_column_slice(p, r, &sums.d_c);
        DiagonalOutput { cost: sums.cost.0 + sums.cost.1, d_b, d_c, sums }
    }

    fn diagonal_range(&self, diag: &Diagonal, full: bool, lo: usize, hi: usize) -> Sums {
        let (p, m) = (self.p, self.m);
        let r = diag.b.nrows();
        let q = diag.d.len();
        let mut sums = Sums::zeros(q, r, m, p, full);
        let mut inv = vec![c(0.0, 0.0); r];
        let mut e = vec![c(0.0, 0.0); p * m];
        let mut ce = vec![c(0.0, 0.0); r * m];
        let mut eb = vec![c(0.0, 0.0); p];
        let bconj: Vec<C64> = diag.b.iter().map(|z| z.conj()).collect(); // column-major r×m
        let cconj: Vec<C64> = diag.c.iter().map(|z| z.conj()).collect(); // column-major p×r
        for k in lo..hi {
            let w = self.weights[k];
            for (l, slot) in inv.iter_mut().enumerate() {
                let mut a = c(0.0, 0.0);
                for i in 0..q {
                    a += self.alpha[i][k] * diag.d[i][l];
                }
                *slot = 1.0 / a;
            }
            e.copy_from_slice(&self.h[k * p * m..(k + 1) * p * m]);
            for l in 0..r {
                for j in 0..m {
                    let bl = diag.b[(l, j)] * inv[l];
                    for kk in 0..p {
                        e[kk + p * j] -= diag.c[(kk, l)] * bl;
                    }
                }
            }
            let sq: f64 = e.iter().map(|z| z.norm_sqr()).sum();
            two_sum(&mut sums.cost, w * sq);
            for l in 0..r {
                let gi = inv[l].conj() * w;
                let mut z = c(0.0, 0.0);
                for j in 0..m {
                    let mut acc = c(0.0, 0.0);
                    for kk in 0..p {
                        acc += cconj[kk + p * l] * e[kk + p * j];
                    }
                    ce[l * m + j] = acc;
                    z += acc * bconj[l + r * j];
                    sums.d_b[l * m + j] -= acc * gi;
                }
                for (kk, slot) in eb.iter_mut().enumerate() {
                    let mut acc = c(0.0, 0.0);
                    for j in 0..m {
                        acc += e[kk + p * j] * bconj[l + r * j];
                    }
                    *slot = acc;
                    sums.d_c[kk + p * l] -= acc * gi;
                }
                let gz = z * inv[l].conj() * gi;
                for i in 0..q {
                    sums.d_a[i][l] += self.alpha[i][k].conj() * gz;
                }
            }
            if full {
                for i in 0..r {
                    for j in 0..r {
                        let mut z = c(0.0, 0.0);
                        for t in 0..m {
                            z += ce[i * m + t] * bconj[j + r * t];
                        }
                        sums.k[i + r * j] += z * (inv[i] * inv[j]).conj() * w;
                    }
                }
            }
        }
        sums
    }
}

struct DiagonalOutput {
    cost: f64,
    d_b: CMat,
    d_c: CMat,
    sums: Sums,
}

impl DiagonalOutput {
    fn into_gradient(self) -> (f64, ModelGradient) {
        (self.cost, ModelGradient::Diagonal { d_a: self.sums.d_a, d_b: self.d_b, d_c: self.d_c })
    }
}
