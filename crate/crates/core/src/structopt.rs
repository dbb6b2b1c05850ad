//! Structure-preserving parameterizations of reduced models and a
//! quasi-Newton optimizer for the squared H2 error.
//!
//! Every parameter vector `θ ∈ ℝ^d` maps to a feasible model: stable poles
//! via `λ = −e^u + iv`, positive damping and stiffness via `e^u`, positive
//! definite dissipation via `R = LLᵀ + 1e−8·I`.

mod engine;
mod init;
mod minimize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use engine::{CoordinateCheck, Evaluation, Objective};
pub use init::{initial_guess, reduce, ReduceOptions, ReduceOutcome, RunSummary};
pub use minimize::{minimize, minimize_objective, MinimizeOptions, OptimizeResult, Termination, TraceEntry};

use crate::error::{Error, Result};
use crate::linalg::{c, eig, to_complex, CMat, RMat, C64};
use crate::optcond::{self, ConditionReport};
use crate::spectra::delay_poles;
use crate::sysmodel::{
    state_space_to_diagonal, DelayROM, DiagonalStructuredROM, Model, PHModel, SecondOrderFOM, SecondOrderROM,
    StateSpaceFOM, TransferEvaluator,
};

/// Shift added to `LLᵀ` in the pH dissipation matrix.
pub const R_SHIFT: f64 = 1e-8;

/// Imaginary parts below this (relative to the modulus) count as real poles.
const REAL_POLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "unstructured")]
    Unstructured,
    #[serde(rename = "so")]
    SecondOrder,
    #[serde(rename = "ph")]
    PortHamiltonian,
    #[serde(rename = "delay")]
    Delay,
}

impl Structure {
    pub const ALL: [Structure; 4] = [Structure::Unstructured, Structure::SecondOrder, Structure::PortHamiltonian, Structure::Delay];

    pub fn tag(&self) -> &'static str {
        match self {
            Structure::Unstructured => "unstructured",
            Structure::SecondOrder => "so",
            Structure::PortHamiltonian => "ph",
            Structure::Delay => "delay",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unstructured" | "lti" => Ok(Structure::Unstructured),
            "so" | "second-order" | "second_order" => Ok(Structure::SecondOrder),
            "ph" | "port-hamiltonian" => Ok(Structure::PortHamiltonian),
            "delay" | "td" => Ok(Structure::Delay),
            other => Err(Error::UnsupportedStructure(other.to_string())),
        }
    }
}

/// Structure-specific choices that are not implied by the dimensions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamOptions {
    /// Number of conjugate pole pairs for unstructured and delay models;
    /// the remaining poles are real. Defaults to `r / 2`.
    pub pairs: Option<usize>,
    /// Delay of delay models, held fixed.
    pub tau: Option<f64>,
}

/// Map between `θ ∈ ℝ^d` and a structured reduced model.
///
/// Unstructured and delay models are stored pairs first: pair `ℓ` occupies
/// states `2ℓ, 2ℓ+1` with conjugate data, and each state carries the gauge
/// `(b_ℓ*)_1 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameterization {
    pub structure: Structure,
    pub r: usize,
    pub m: usize,
    pub p: usize,
    pub pairs: usize,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    pair: bool,
    offset: usize,
    state: usize,
}

pub fn make_parameterization(structure: Structure, r: usize, m: usize, p: usize, options: &ParamOptions) -> Result<Parameterization> {
    if r == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!("orders must be positive, got r={r}, m={m}, p={p}")));
    }
    let mut pairs = 0;
    let mut tau = None;
    match structure {
        Structure::Unstructured | Structure::Delay => {
            pairs = options.pairs.unwrap_or(r / 2);
            if 2 * pairs > r {
                return Err(Error::InvalidArgument(format!("{pairs} conjugate pairs do not fit order {r}")));
            }
            if structure == Structure::Delay {
                let t = options.tau.ok_or_else(|| Error::InvalidArgument("delay models need a delay".into()))?;
                if !(t > 0.0) || !t.is_finite() {
                    return Err(Error::InvalidArgument(format!("delay must be positive, got {t}")));
                }
                tau = Some(t);
            }
        }
        Structure::PortHamiltonian if m != p => {
            return Err(Error::UnsupportedStructure("pH models need as many outputs as inputs".into()));
        }
        _ => {}
    }
    Ok(Parameterization { structure, r, m, p, pairs, tau })
}

fn check_finite(values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("parameters leave the representable range".into()))
    }
}

fn strict_lower(r: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..r).flat_map(|i| (0..i).map(move |j| (i, j)))
}

fn lower(r: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..r).flat_map(|i| (0..=i).map(move |j| (i, j)))
}

/// Reads real or complex entries from a parameter slice.
struct Reader<'a> {
    t: &'a [f64],
    at: usize,
}

impl Reader<'_> {
    fn real(&mut self) -> f64 {
        self.at += 1;
        self.t[self.at - 1]
    }

    fn value(&mut self, complex: bool) -> C64 {
        if complex {
            let z = c(self.t[self.at], self.t[self.at + 1]);
            self.at += 2;
            z
        } else {
            c(self.real(), 0.0)
        }
    }
}

impl Parameterization {
    fn is_delay(&self) -> bool {
        self.structure == Structure::Delay
    }

    fn block_len(&self, pair: bool) -> usize {
        let w = if pair { 2 } else { 1 };
        let sigma = if self.is_delay() { w } else { 0 };
        w + sigma + w * (self.m - 1) + w * self.p
    }

    fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::new();
        let mut offset = 0;
        for l in 0..self.pairs {
            out.push(Block { pair: true, offset, state: 2 * l });
            offset += self.block_len(true);
        }
        for s in 2 * self.pairs..self.r {
            out.push(Block { pair: false, offset, state: s });
            offset += self.block_len(false);
        }
        out
    }

    pub fn dim(&self) -> usize {
        let (r, m, p) = (self.r, self.m, self.p);
        match self.structure {
            Structure::Unstructured | Structure::Delay => {
                self.pairs * self.block_len(true) + (r - 2 * self.pairs) * self.block_len(false)
            }
            Structure::SecondOrder => 2 * r + r * m + p * r,
            Structure::PortHamiltonian => r * (r - 1) / 2 + r * (r + 1) / 2 + r * m,
        }
    }

    /// Coordinates on which `Ĥ` depends linearly (the output residues).
    pub fn linear_coords(&self) -> Vec<usize> {
        match self.structure {
            Structure::Unstructured | Structure::Delay => {
                let mut out = Vec::new();
                for b in self.blocks() {
                    let len = self.block_len(b.pair);
                    let w = if b.pair { 2 } else { 1 };
                    out.extend(b.offset + len - w * self.p..b.offset + len);
                }
                out
            }
            Structure::SecondOrder => {
                let start = 2 * self.r + self.r * self.m;
                (start..start + self.p * self.r).collect()
            }
            Structure::PortHamiltonian => Vec::new(),
        }
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension(format!("parameter vector has {} entries, expected {}", theta.len(), self.dim())));
        }
        check_finite(theta.iter().copied())
    }

    pub fn unpack(&self, theta: &[f64]) -> Result<Rom> {
        self.check_len(theta)?;
        let (r, m, p) = (self.r, self.m, self.p);
        match self.structure {
            Structure::Unstructured | Structure::Delay => {
                let mut mu = vec![c(0.0, 0.0); r];
                let mut sigma = vec![c(0.0, 0.0); r];
                let mut bm = CMat::zeros(r, m);
                let mut cm = CMat::zeros(p, r);
                for blk in self.blocks() {
                    let mut rd = Reader { t: &theta[blk.offset..], at: 0 };
                    let u = rd.real();
                    let v = if blk.pair { rd.real() } else { 0.0 };
                    let st = blk.state;
                    mu[st] = c(-u.exp(), v);
                    if self.is_delay() {
                        sigma[st] = rd.value(blk.pair);
                    }
                    bm[(st, 0)] = c(1.0, 0.0);
                    for j in 1..m {
                        bm[(st, j)] = rd.value(blk.pair);
                    }
                    for k in 0..p {
                        cm[(k, st)] = rd.value(blk.pair);
                    }
                    if blk.pair {
                        mu[st + 1] = mu[st].conj();
                        sigma[st + 1] = sigma[st].conj();
                        for j in 0..m {
                            bm[(st + 1, j)] = bm[(st, j)].conj();
                        }
                        for k in 0..p {
                            cm[(k, st + 1)] = cm[(k, st)].conj();
                        }
                    }
                }
                check_finite(mu.iter().map(|z| z.re))?;
                if self.is_delay() {
                    let tau = self.tau.expect("delay parameterization has a delay");
                    for blk in self.blocks() {
                        // the principal branch carries the rightmost pole
                        delay_poles(mu[blk.state], sigma[blk.state], tau, 0)?;
                    }
                    Ok(Rom::Delay(DelayROM::new(mu, sigma, tau, bm, cm)?))
                } else {
                    Ok(Rom::Unstructured { rom: DiagonalStructuredROM::pole_residue(&mu, bm, cm)?, pairs: self.pairs })
                }
            }
            Structure::SecondOrder => {
                let e: Vec<f64> = theta[..r].iter().map(|u| u.exp()).collect();
                let k: Vec<f64> = theta[r..2 * r].iter().map(|v| v.exp()).collect();
                check_finite(e.iter().chain(&k).copied())?;
                let bm = RMat::from_column_slice(r, m, &theta[2 * r..2 * r + r * m]);
                let cm = RMat::from_column_slice(p, r, &theta[2 * r + r * m..]);
                Ok(Rom::SecondOrder(SecondOrderROM::new(e, k, bm, cm)?))
            }
            Structure::PortHamiltonian => {
                let mut it = theta.iter().copied();
                let mut s = RMat::zeros(r, r);
                for (i, j) in strict_lower(r) {
                    s[(i, j)] = it.next().expect("length checked");
                }
                let mut l = RMat::zeros(r, r);
                for (i, j) in lower(r) {
                    l[(i, j)] = it.next().expect("length checked");
                }
                let rest: Vec<f64> = it.collect();
                let bm = RMat::from_column_slice(r, m, &rest);
                let j = &s - s.transpose();
                let rr = &l * l.transpose() + RMat::identity(r, r) * R_SHIFT;
                check_finite(rr.iter().copied())?;
                Ok(Rom::PortHamiltonian(PHModel::new(j, rr, bm)?))
            }
        }
    }

    /// Inverse of [`unpack`](Self::unpack) on models in the image of the map.
    pub fn pack(&self, rom: &Rom) -> Result<Vec<f64>> {
        if rom.structure() != self.structure || rom.order() != self.r || rom.inputs() != self.m || rom.outputs() != self.p {
            return Err(Error::Dimension("model does not match the parameterization".into()));
        }
        let r = self.r;
        let mut theta = Vec::with_capacity(self.dim());
        match rom {
            Rom::Unstructured { rom: d, pairs } => {
                if *pairs != self.pairs {
                    return Err(Error::Dimension(format!("model has {pairs} pole pairs, expected {}", self.pairs)));
                }
                let poles = d.first_order_poles().ok_or_else(|| Error::UnsupportedStructure("model is not first order".into()))?;
                self.pack_diagonal(&mut theta, &poles, None, &d.b, &d.c)?;
                let Rom::Unstructured { rom: back, .. } = self.unpack(&theta)? else { unreachable!() };
                check_representable(&poles, None, &d.b, &d.c, &back.first_order_poles().expect("first order"), None, &back.b, &back.c)?;
            }
            Rom::Delay(d) => {
                if (d.tau - self.tau.unwrap_or(f64::NAN)).abs() > 0.0 {
                    return Err(Error::InvalidArgument(format!("model delay {} differs from the fixed delay", d.tau)));
                }
                self.pack_diagonal(&mut theta, &d.mu, Some(&d.sigma), &d.b, &d.c)?;
                let Rom::Delay(back) = self.unpack(&theta)? else { unreachable!() };
                check_representable(&d.mu, Some(&d.sigma), &d.b, &d.c, &back.mu, Some(&back.sigma), &back.b, &back.c)?;
            }
            Rom::SecondOrder(so) => {
                theta.extend(so.e.iter().map(|x| x.ln()));
                theta.extend(so.k.iter().map(|x| x.ln()));
                theta.extend(so.b.iter());
                theta.extend(so.c.iter());
            }
            Rom::PortHamiltonian(ph) => {
                theta.extend(strict_lower(r).map(|(i, j)| ph.j[(i, j)]));
                let shifted = &ph.r - RMat::identity(r, r) * R_SHIFT;
                let chol = nalgebra::Cholesky::new(shifted)
                    .ok_or_else(|| Error::InvalidArgument("R − 1e−8·I is not positive definite".into()))?;
                let l = chol.l();
                theta.extend(lower(r).map(|(i, j)| l[(i, j)]));
                theta.extend(ph.b.iter());
            }
        }
        check_finite(theta.iter().copied())?;
        Ok(theta)
    }

    fn pack_diagonal(&self, theta: &mut Vec<f64>, mu: &[C64], sigma: Option<&[C64]>, bm: &CMat, cm: &CMat) -> Result<()> {
        for blk in self.blocks() {
            let st = blk.state;
            let lam = mu[st];
            if !(lam.re < 0.0) {
                return Err(Error::UnstablePole(lam));
            }
            theta.push((-lam.re).ln());
            if blk.pair {
                theta.push(lam.im);
            }
            let push = |theta: &mut Vec<f64>, z: C64| {
                theta.push(z.re);
                if blk.pair {
                    theta.push(z.im);
                }
            };
            if let Some(sig) = sigma {
                push(theta, sig[st]);
            }
            let gauge = bm[(st, 0)];
            if gauge.norm() == 0.0 {
                return Err(Error::InvalidArgument(format!("first input residue of state {st} is zero")));
            }
            for j in 1..self.m {
                push(theta, bm[(st, j)] / gauge);
            }
            for k in 0..self.p {
                push(theta, cm[(k, st)] * gauge);
            }
        }
        Ok(())
    }

    /// `∇_θ J` from the model-level gradient.
    pub(crate) fn chain(&self, theta: &[f64], g: &ModelGradient) -> Vec<f64> {
        let (r, m, p) = (self.r, self.m, self.p);
        let mut out = vec![0.0; self.dim()];
        // dJ/dθ = 2 Re Σ conj(G_entry) ∂entry/∂θ
        let dj = |gz: C64, d: C64| 2.0 * (gz.conj() * d).re;
        match (self.structure, g) {
            (Structure::Unstructured | Structure::Delay, ModelGradient::Diagonal { d_a, d_b, d_c }) => {
                let i_unit = c(0.0, 1.0);
                for blk in self.blocks() {
                    let st = blk.state;
                    let mut at = blk.offset;
                    let ex = theta[at].exp();
                    // complex coordinate z at state st, conj(z) at st+1
                    let complex_pair = |out: &mut Vec<f64>, at: &mut usize, g1: C64, g2: C64| {
                        out[*at] = dj(g1, c(1.0, 0.0)) + dj(g2, c(1.0, 0.0));
                        out[*at + 1] = dj(g1, i_unit) + dj(g2, -i_unit);
                        *at += 2;
                    };
                    if blk.pair {
                        out[at] = dj(d_a[1][st], c(-ex, 0.0)) + dj(d_a[1][st + 1], c(-ex, 0.0));
                        out[at + 1] = dj(d_a[1][st], i_unit) + dj(d_a[1][st + 1], -i_unit);
                        at += 2;
                        if self.is_delay() {
                            complex_pair(&mut out, &mut at, d_a[2][st], d_a[2][st + 1]);
                        }
                        for j in 1..m {
                            complex_pair(&mut out, &mut at, d_b[(st, j)], d_b[(st + 1, j)]);
                        }
                        for k in 0..p {
                            complex_pair(&mut out, &mut at, d_c[(k, st)], d_c[(k, st + 1)]);
                        }
                    } else {
                        out[at] = dj(d_a[1][st], c(-ex, 0.0));
                        at += 1;
                        let real = |out: &mut Vec<f64>, at: &mut usize, gz: C64| {
                            out[*at] = dj(gz, c(1.0, 0.0));
                            *at += 1;
                        };
                        if self.is_delay() {
                            real(&mut out, &mut at, d_a[2][st]);
                        }
                        for j in 1..m {
                            real(&mut out, &mut at, d_b[(st, j)]);
                        }
                        for k in 0..p {
                            real(&mut out, &mut at, d_c[(k, st)]);
                        }
                    }
                }
            }
            (Structure::SecondOrder, ModelGradient::Diagonal { d_a, d_b, d_c }) => {
                for l in 0..r {
                    out[l] = dj(d_a[1][l], c(theta[l].exp(), 0.0));
                    out[r + l] = dj(d_a[2][l], c(theta[r + l].exp(), 0.0));
                }
                let mut at = 2 * r;
                for j in 0..m {
                    for l in 0..r {
                        out[at] = 2.0 * d_b[(l, j)].re;
                        at += 1;
                    }
                }
                for l in 0..r {
                    for k in 0..p {
                        out[at] = 2.0 * d_c[(k, l)].re;
                        at += 1;
                    }
                }
            }
            (Structure::PortHamiltonian, ModelGradient::Dense { d_a, d_b }) => {
                let mut at = 0;
                for (i, j) in strict_lower(r) {
                    out[at] = d_a[(i, j)] - d_a[(j, i)];
                    at += 1;
                }
                let mut l = RMat::zeros(r, r);
                for (k, (i, j)) in lower(r).enumerate() {
                    l[(i, j)] = theta[r * (r - 1) / 2 + k];
                }
                // A = J − LLᵀ − shift
                let dl = -(d_a + d_a.transpose()) * &l;
                for (i, j) in lower(r) {
                    out[at] = dl[(i, j)];
                    at += 1;
                }
                for v in d_b.iter() {
                    out[at] = *v;
                    at += 1;
                }
            }
            _ => unreachable!("gradient kind always matches the structure"),
        }
        out
    }
}

/// Gradient of `J` with respect to the model data.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ModelGradient {
    /// Wirtinger gradients of the diagonal entries of each `Â_i`, of `B̂` and of `Ĉ`.
    Diagonal { d_a: Vec<Vec<C64>>, d_b: CMat, d_c: CMat },
    /// Real gradients with respect to `A = J − R` and `B` of a pH model.
    Dense { d_a: RMat, d_b: RMat },
}

/// A reduced model produced by a [`Parameterization`].
#[derive(Debug, Clone, PartialEq)]
pub enum Rom {
    /// Pole-residue model, conjugate pairs first.
    Unstructured { rom: DiagonalStructuredROM, pairs: usize },
    SecondOrder(SecondOrderROM),
    PortHamiltonian(PHModel),
    Delay(DelayROM),
}

impl Rom {
    pub fn structure(&self) -> Structure {
        match self {
            Rom::Unstructured { .. } => Structure::Unstructured,
            Rom::SecondOrder(_) => Structure::SecondOrder,
            Rom::PortHamiltonian(_) => Structure::PortHamiltonian,
            Rom::Delay(_) => Structure::Delay,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            Rom::Unstructured { rom, .. } => rom.order(),
            Rom::SecondOrder(m) => m.order(),
            Rom::PortHamiltonian(m) => m.order(),
            Rom::Delay(m) => m.order(),
        }
    }

    fn inner(&self) -> &dyn TransferEvaluator {
        match self {
            Rom::Unstructured { rom, .. } => rom,
            Rom::SecondOrder(m) => m,
            Rom::PortHamiltonian(m) => m,
            Rom::Delay(m) => m,
        }
    }

    /// Model-file form. Pole-residue models are stored as a real
    /// realization with a `2×2` rotation block per conjugate pair.
    pub fn to_model(&self) -> Model {
        match self {
            Rom::Unstructured { rom, pairs } => Model::StateSpace(real_realization(rom, *pairs)),
            Rom::SecondOrder(m) => Model::SecondOrder(m.to_fom()),
            Rom::PortHamiltonian(m) => Model::PortHamiltonian(m.clone()),
            Rom::Delay(m) => Model::Delay(m.clone()),
        }
    }

    /// Interpret a model file as a reduced model of the given structure.
    pub fn from_model(structure: Structure, model: &Model) -> Result<Rom> {
        match (structure, model) {
            (Structure::Unstructured, Model::StateSpace(ss)) => unstructured_from_state_space(ss),
            (Structure::SecondOrder, Model::SecondOrder(so)) => {
                Ok(Rom::SecondOrder(SecondOrderROM::from_fom(so).or_else(|_| second_order_modal(so))?))
            }
            (Structure::PortHamiltonian, Model::PortHamiltonian(ph)) => Ok(Rom::PortHamiltonian(ph.clone())),
            (Structure::Delay, Model::Delay(d)) => Ok(Rom::Delay(d.clone())),
            (s, m) => Err(Error::UnsupportedStructure(format!("a {} model file cannot be read as a {s} model", m.kind()))),
        }
    }

    /// Model-level gradient through the general Wirtinger formulas.
    pub(crate) fn model_gradient(&self, bundle: &crate::wirtinger::GradientBundle) -> ModelGradient {
        match self {
            Rom::PortHamiltonian(_) => {
                let g = crate::wirtinger::ph_gradient_from_bundle(bundle);
                ModelGradient::Dense { d_a: g.d_jr, d_b: g.d_b }
            }
            _ => ModelGradient::Diagonal {
                d_a: bundle.d_a.iter().map(|m| (0..m.nrows()).map(|i| m[(i, i)]).collect()).collect(),
                d_b: bundle.d_b[0].clone(),
                d_c: bundle.d_c[0].clone(),
            },
        }
    }

    pub(crate) fn to_param_sep(&self) -> crate::sysmodel::ParamSepModel {
        match self {
            Rom::Unstructured { rom, .. } => rom.to_param_sep(),
            Rom::SecondOrder(m) => m.to_diagonal().to_param_sep(),
            Rom::PortHamiltonian(m) => m.to_param_sep(),
            Rom::Delay(m) => m.to_diagonal().to_param_sep(),
        }
    }
}

impl TransferEvaluator for Rom {
    fn inputs(&self) -> usize {
        self.inner().inputs()
    }
    fn outputs(&self) -> usize {
        self.inner().outputs()
    }
    fn eval(&self, s: C64) -> Result<CMat> {
        self.inner().eval(s)
    }
    fn eval_derivative(&self, s: C64) -> Result<CMat> {
        self.inner().eval_derivative(s)
    }
    fn poles_hint(&self) -> Vec<C64> {
        match self {
            Rom::Unstructured { rom, .. } => rom.poles_hint(),
            Rom::SecondOrder(m) => m.poles_hint(),
            Rom::PortHamiltonian(m) => m.poles_hint(),
            Rom::Delay(m) => m.poles_hint(),
        }
    }
    fn decay_order(&self) -> u32 {
        self.inner().decay_order()
    }
    fn has_delay(&self) -> bool {
        self.inner().has_delay()
    }
}

/// Real state-space form of a pole-residue model whose first `2·pairs`
/// states come in conjugate pairs.
pub fn real_realization(rom: &DiagonalStructuredROM, pairs: usize) -> StateSpaceFOM {
    let r = rom.order();
    let (m, p) = (rom.inputs(), rom.outputs());
    let poles = rom.first_order_poles().expect("pole-residue model");
    let mut a = RMat::zeros(r, r);
    let mut b = RMat::zeros(r, m);
    let mut cm = RMat::zeros(p, r);
    for l in 0..pairs {
        let (i, lam) = (2 * l, poles[2 * l]);
        a[(i, i)] = lam.re;
        a[(i, i + 1)] = lam.im;
        a[(i + 1, i)] = -lam.im;
        a[(i + 1, i + 1)] = lam.re;
        for j in 0..m {
            b[(i, j)] = 2.0 * rom.b[(i, j)].re;
            b[(i + 1, j)] = -2.0 * rom.b[(i, j)].im;
        }
        for k in 0..p {
            cm[(k, i)] = rom.c[(k, i)].re;
            cm[(k, i + 1)] = rom.c[(k, i)].im;
        }
    }
    for i in 2 * pairs..r {
        a[(i, i)] = poles[i].re;
        for j in 0..m {
            b[(i, j)] = rom.b[(i, j)].re;
        }
        for k in 0..p {
            cm[(k, i)] = rom.c[(k, i)].re;
        }
    }
    StateSpaceFOM { e: RMat::identity(r, r), a, b, c: cm, delay: None }
}

/// Pole-residue form of a real first-order model, conjugate pairs first and
/// each residue scaled to the unit gauge.
pub fn unstructured_from_state_space(fom: &StateSpaceFOM) -> Result<Rom> {
    let d = state_space_to_diagonal(fom)?.rom;
    let poles = d.first_order_poles().ok_or_else(|| Error::UnsupportedStructure("model is not first order".into()))?;
    let r = poles.len();
    let is_real = |z: C64| z.im.abs() <= REAL_POLE_TOL * z.norm().max(1e-300);
    let mut upper: Vec<usize> = (0..r).filter(|&i| !is_real(poles[i]) && poles[i].im > 0.0).collect();
    let reals: Vec<usize> = (0..r).filter(|&i| is_real(poles[i])).collect();
    if 2 * upper.len() + reals.len() != r {
        return Err(Error::InvalidArgument("poles are not closed under conjugation".into()));
    }
    upper.sort_by(|&x, &y| poles[x].im.total_cmp(&poles[y].im));
    let (m, p) = (d.inputs(), d.outputs());
    let mut mu = Vec::with_capacity(r);
    let mut bm = CMat::zeros(r, m);
    let mut cm = CMat::zeros(p, r);
    for &i in upper.iter().chain(&reals) {
        if d.b[(i, 0)].norm() == 0.0 {
            return Err(Error::InvalidArgument("a pole has zero first input residue".into()));
        }
    }
    // (state, source, conjugate, real)
    let mut plan = Vec::with_capacity(r);
    for (l, &i) in upper.iter().enumerate() {
        plan.push((2 * l, i, false, false));
        plan.push((2 * l + 1, i, true, false));
    }
    for (l, &i) in reals.iter().enumerate() {
        plan.push((2 * upper.len() + l, i, false, true));
    }
    for (st, src, conj, real) in plan {
        let gauge = d.b[(src, 0)];
        let f = |z: C64| if real { c(z.re, 0.0) } else if conj { z.conj() } else { z };
        mu.push(f(poles[src]));
        for j in 0..m {
            bm[(st, j)] = f(d.b[(src, j)] / gauge);
        }
        for k in 0..p {
            cm[(k, st)] = f(d.c[(k, src)] * gauge);
        }
    }
    Ok(Rom::Unstructured { rom: DiagonalStructuredROM::pole_residue(&mu, bm, cm)?, pairs: upper.len() })
}

/// Modal form of a proportionally damped second-order model: `Φᵀ M Φ = I`
/// with `ΦᵀEΦ`, `ΦᵀKΦ` diagonal.
pub fn second_order_modal(fom: &SecondOrderFOM) -> Result<SecondOrderROM> {
    let n = fom.order();
    let chol = nalgebra::Cholesky::new(fom.m.clone()).ok_or_else(|| Error::InvalidArgument("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::InvalidArgument("mass matrix is singular".into()))?;
    let kt = &linv * &fom.k * linv.transpose();
    let kt = (&kt + kt.transpose()) * 0.5;
    let se = nalgebra::SymmetricEigen::new(kt);
    let phi = linv.transpose() * &se.eigenvectors;
    let et = phi.transpose() * &fom.e * &phi;
    let scale = et.norm().max(1e-300);
    for i in 0..n {
        for j in 0..n {
            if i != j && et[(i, j)].abs() > 1e-9 * scale {
                return Err(Error::NotDiagonalizable("damping is not proportional".into()));
            }
        }
    }
    SecondOrderROM::new(
        (0..n).map(|i| et[(i, i)]).collect(),
        se.eigenvalues.iter().copied().collect(),
        phi.transpose() * &fom.b,
        &fom.c * &phi,
    )
}

/// Packing keeps only the first state of every conjugate pair and the real
/// part of real states; anything else would be silently projected away.
#[allow(clippy::too_many_arguments)]
fn check_representable(mu: &[C64], sigma: Option<&[C64]>, b: &CMat, cm: &CMat, mu2: &[C64], sigma2: Option<&[C64]>, b2: &CMat, c2: &CMat) -> Result<()> {
    let close = |x: C64, y: C64| (x - y).norm() <= 1e-10 * (x.norm() + y.norm()).max(1e-300);
    let mut ok = mu.iter().zip(mu2).all(|(x, y)| close(*x, *y));
    if let (Some(s1), Some(s2)) = (sigma, sigma2) {
        ok &= s1.iter().zip(s2).all(|(x, y)| close(*x, *y) || x.norm() + y.norm() == 0.0);
    }
    for l in 0..mu.len() {
        let r1 = cm.column(l) * b.row(l);
        let r2 = c2.column(l) * b2.row(l);
        ok &= (&r1 - &r2).norm() <= 1e-10 * (r1.norm() + r2.norm()).max(1e-300);
    }
    if ok {
        Ok(())
    } else {
        Err(Error::UnsupportedStructure("model is not a real system with conjugate pairs first".into()))
    }
}

/// Reduced structure a model file naturally represents.
pub fn structure_of(model: &Model) -> Result<Structure> {
    match model {
        Model::StateSpace(m) if m.delay.is_none() => Ok(Structure::Unstructured),
        Model::SecondOrder(_) => Ok(Structure::SecondOrder),
        Model::PortHamiltonian(_) => Ok(Structure::PortHamiltonian),
        Model::Delay(_) => Ok(Structure::Delay),
        other => Err(Error::UnsupportedStructure(format!("no reduced structure for a {} model file", other.kind()))),
    }
}

/// The internal delay of a model file, if it has one.
pub fn delay_of(model: &Model) -> Option<f64> {
    match model {
        Model::StateSpace(m) => m.delay.as_ref().map(|d| d.1),
        Model::Delay(d) => Some(d.tau),
        _ => None,
    }
}

/// Condition report matching the structure of `rom`.
pub fn certify(h: &dyn TransferEvaluator, rom: &Rom) -> Result<ConditionReport> {
    match rom {
        Rom::Unstructured { rom, .. } => optcond::residual_unstructured(h, rom),
        Rom::SecondOrder(m) => optcond::residual_second_order(h, m),
        Rom::PortHamiltonian(m) => optcond::residual_ph(h, m),
        Rom::Delay(m) => optcond::residual_delay(h, m, None),
    }
}

/// Eigen-decomposition of a real pH system matrix, or `None` when the
/// eigenvector matrix is too ill-conditioned to work in modal coordinates.
pub(crate) fn modal_basis(a: &RMat) -> Option<(Vec<C64>, CMat, CMat)> {
    let dec = eig(&to_complex(a)).ok()?;
    let tinv = crate::linalg::inverse(&dec.vectors)?;
    let cond = dec.vectors.norm() * tinv.norm();
    if !(cond < 1e8) {
        return None;
    }
    Some((dec.values, dec.vectors, tinv))
}

#[cfg(test)]
mod tests;
