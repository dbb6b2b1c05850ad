//! Necessary H2 optimality conditions evaluated as residuals.
//!
//! Every condition is an equality `LHS = RHS` between an expression in the
//! full-order `H` and the same expression in the reduced `Ĥ`. A record keeps
//! the signed residual `LHS − RHS`, its norm and the normalization
//! `|LHS| + |RHS| + 1e−30`.

mod delay;

use std::fmt::{self, Write as _};

use nalgebra::{Dim, Matrix, RawStorage, LU};
use serde::{Deserialize, Serialize};

pub use delay::{residual_delay, DELAY_WINDOW_CAP, DELAY_WINDOW_START, DELAY_WINDOW_TOL};

use crate::error::{Error, Result};
use crate::h2metric::FrequencyGrid;
use crate::linalg::{c, CMat, CVec, MatrixSum, C64};
use crate::par;
use crate::spectra::PoleSet;
use crate::sysmodel::{
    second_order_factorization, ph_modal_data, DiagonalStructuredROM, PHModel, ParamSepModel, PhModalData, SecondOrderROM,
    TransferEvaluator,
};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Which family of conditions a report holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionFamily {
    Unstructured,
    L2Stationarity,
    GeneralDiagonal,
    SecondOrder,
    SecondOrder2d,
    PortHamiltonian,
    Delay,
}

impl fmt::Display for ConditionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConditionFamily::Unstructured => "unstructured",
            ConditionFamily::L2Stationarity => "l2-stationarity",
            ConditionFamily::GeneralDiagonal => "general-diagonal",
            ConditionFamily::SecondOrder => "second-order",
            ConditionFamily::SecondOrder2d => "second-order-2d",
            ConditionFamily::PortHamiltonian => "port-hamiltonian",
            ConditionFamily::Delay => "delay",
        };
        f.write_str(s)
    }
}

/// One evaluated condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub id: String,
    /// `[ℓ]`, `[i, j]` or empty for matrix-valued conditions.
    pub index: Vec<usize>,
    pub abs: f64,
    pub rel: f64,
    pub scale: f64,
    /// `LHS − RHS`, column-major.
    pub residual: Vec<C64>,
}

impl ConditionRecord {
    pub fn from_sides<R1, C1, S1, R2, C2, S2>(id: &str, index: Vec<usize>, lhs: &Matrix<C64, R1, C1, S1>, rhs: &Matrix<C64, R2, C2, S2>) -> Self
    where
        R1: Dim,
        C1: Dim,
        S1: RawStorage<C64, R1, C1>,
        R2: Dim,
        C2: Dim,
        S2: RawStorage<C64, R2, C2>,
    {
        assert_eq!(lhs.shape(), rhs.shape(), "condition sides differ in shape");
        let residual: Vec<C64> = lhs.iter().zip(rhs.iter()).map(|(a, b)| a - b).collect();
        let norm = |it: &mut dyn Iterator<Item = &C64>| it.map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let abs = norm(&mut residual.iter());
        let scale = norm(&mut lhs.iter()) + norm(&mut rhs.iter()) + 1e-30;
        ConditionRecord { id: id.to_string(), index, abs, rel: abs / scale.max(1e-300), scale, residual }
    }
}

/// Branch truncation of the delay sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Largest branch label `J` used.
    pub window: usize,
    /// Estimated error of the truncated (or extrapolated) sums.
    pub tail: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub family: ConditionFamily,
    pub records: Vec<ConditionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<Truncation>,
}

impl ConditionReport {
    fn new(family: ConditionFamily, records: Vec<ConditionRecord>) -> Self {
        ConditionReport { family, records, truncation: None }
    }

    /// All relative residuals below `tol`.
    pub fn passed(&self, tol: f64) -> bool {
        self.records.iter().all(|r| r.rel < tol)
    }

    pub fn max_relative(&self) -> f64 {
        self.records.iter().map(|r| r.rel).fold(0.0, f64::max)
    }

    pub fn max_absolute(&self) -> f64 {
        self.records.iter().map(|r| r.abs).fold(0.0, f64::max)
    }

    pub fn with_id<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a ConditionRecord> + 'a {
        self.records.iter().filter(move |r| r.id == id)
    }

    pub fn get(&self, id: &str, index: &[usize]) -> Option<&ConditionRecord> {
        self.records.iter().find(|r| r.id == id && r.index == index)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table with a verdict line at `tol`.
    pub fn table(&self, tol: f64) -> String {
        let idx: Vec<String> = self
            .records
            .iter()
            .map(|r| r.index.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        let wid = self.records.iter().map(|r| r.id.len()).chain([9]).max().unwrap_or(9);
        let wix = idx.iter().map(|s| s.len()).chain([5]).max().unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<wid$}  {:<wix$}  {:>12}  {:>12}  {:>12}", "condition", "index", "abs", "rel", "scale");
        for (r, ix) in self.records.iter().zip(&idx) {
            let flag = if r.rel < tol { "" } else { "  !" };
            let _ = writeln!(out, "{:<wid$}  {:<wix$}  {:>12.3e}  {:>12.3e}  {:>12.3e}{flag}", r.id, ix, r.abs, r.rel, r.scale);
        }
        if let Some(t) = &self.truncation {
            let _ = writeln!(out, "branch window {} (tail {:.2e}{})", t.window, t.tail, if t.extrapolated { ", extrapolated" } else { "" });
        }
        let verdict = if self.passed(tol) { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{}: {} (max rel {:.3e}, tol {:.1e})", self.family, verdict, self.max_relative(), tol);
        out
    }
}

struct Point {
    h: CMat,
    hh: CMat,
    dh: CMat,
    dhh: CMat,
}

fn eval_point(h: &dyn TransferEvaluator, hhat: &dyn TransferEvaluator, s: C64) -> Result<Point> {
    Ok(Point { h: h.eval(s)?, hh: hhat.eval(s)?, dh: h.eval_derivative(s)?, dhh: hhat.eval_derivative(s)? })
}

fn check_shapes(h: &dyn TransferEvaluator, hhat: &dyn TransferEvaluator) -> Result<()> {
    if h.inputs() != hhat.inputs() || h.outputs() != hhat.outputs() {
        return Err(Error::Dimension("FOM and ROM transfer shapes differ".into()));
    }
    Ok(())
}

fn dense<R: Dim, C: Dim, S: RawStorage<C64, R, C>>(m: &Matrix<C64, R, C, S>) -> CMat {
    CMat::from_iterator(m.nrows(), m.ncols(), m.iter().copied())
}

/// `c* M b` as a 1×1 matrix.
fn bi(cv: &CVec, m: &CMat, bv: &CVec) -> CMat {
    CMat::from_element(1, 1, cv.dotc(&(m * bv)))
}

fn check_stable(poles: &[C64]) -> Result<()> {
    match poles.iter().find(|z| !(z.re < 0.0)) {
        Some(z) => Err(Error::UnstablePole(*z)),
        None => Ok(()),
    }
}

/// First pair of entries `(ℓ, k)` of `poles` tagged with different owners
/// that coincide to relative `1e−10`.
fn find_collision(poles: &mut [(C64, usize)]) -> Option<(usize, usize)> {
    poles.sort_by(|a, b| a.0.re.total_cmp(&b.0.re));
    for i in 0..poles.len() {
        let (z, l) = poles[i];
        let tol = 1e-10 * (1.0 + z.norm());
        for &(w, k) in &poles[i + 1..] {
            if w.re - z.re > tol {
                break;
            }
            if l != k && (w - z).norm() <= tol {
                return Some((l.min(k), l.max(k)));
            }
        }
    }
    None
}

/// Bitangential Hermite conditions at the mirror images of the poles of the
/// first-order diagonal model `Ĥ(s) = Σ c_ℓ b_ℓ* / (s − λ_ℓ)`.
pub fn residual_unstructured(h: &dyn TransferEvaluator, rom: &DiagonalStructuredROM) -> Result<ConditionReport> {
    check_shapes(h, rom)?;
    let poles = rom
        .first_order_poles()
        .ok_or_else(|| Error::UnsupportedStructure("denominators are not of the form s − λ".into()))?;
    check_stable(&poles)?;
    let mut tagged: Vec<(C64, usize)> = poles.iter().copied().zip(0..).collect();
    if let Some((first, second)) = find_collision(&mut tagged) {
        return Err(Error::DisjointnessViolation { first, second });
    }
    let rows: Vec<Result<[ConditionRecord; 3]>> = par::map_chunked(poles.len(), 1, |l| {
        let p = eval_point(h, rom, -poles[l].conj())?;
        let (bl, cl) = (rom.b_vec(l), rom.c_vec(l));
        Ok([
            ConditionRecord::from_sides("lti-right", vec![l], &(&p.h * &bl), &(&p.hh * &bl)),
            ConditionRecord::from_sides("lti-left", vec![l], &(cl.adjoint() * &p.h), &(cl.adjoint() * &p.hh)),
            ConditionRecord::from_sides("lti-hermite", vec![l], &bi(&cl, &p.dh, &bl), &bi(&cl, &p.dhh, &bl)),
        ])
    });
    let mut records = Vec::with_capacity(3 * poles.len());
    for row in rows {
        records.extend(row?);
    }
    Ok(ConditionReport::new(ConditionFamily::Unstructured, records))
}

struct L2Node {
    a: Vec<(CMat, CMat)>,
    b: Vec<(CMat, CMat)>,
    c: Vec<(CMat, CMat)>,
}

/// Stationarity of the squared H2 error in every matrix `Â_i`, `B̂_j`,
/// `Ĉ_k`: `∫ conj(α_i) X_d H X* dμ = ∫ conj(α_i) X_d Ĥ X* dμ` and the
/// analogous `B̂`, `Ĉ` integrals, by quadrature on `grid`.
///
/// When every `Â_i` is diagonal the diagonal entries are also reported one
/// by one as `cond-A-diag` records indexed `[i, ℓ]`.
pub fn residual_l2_stationarity(
    h: &dyn TransferEvaluator,
    rom: &ParamSepModel,
    grid: &FrequencyGrid,
) -> Result<ConditionReport> {
    check_shapes(h, rom)?;
    let nodes: Vec<Result<L2Node>> = par::map_indexed(grid.len(), |k| {
        let s = c(0.0, grid.nodes[k]);
        let a = rom.a_at(s);
        let bs = rom.b_at(s);
        let cs = rom.c_at(s);
        let singular = || Error::SingularAtPoint(s);
        let x = LU::new(a.clone()).solve(&bs).ok_or_else(singular)?;
        let xd = LU::new(a.adjoint()).solve(&cs.adjoint()).ok_or_else(singular)?;
        let hs = h.eval(s)?;
        let hh = &cs * &x;
        let xa = x.adjoint();
        let (dh, dhh) = (&xd * &hs, &xd * &hh);
        let (hx, hhx) = (&hs * &xa, &hh * &xa);
        let weigh = |f: C64, l: &CMat, r: &CMat| (l * f.conj(), r * f.conj());
        Ok(L2Node {
            a: rom.a_terms.iter().map(|(f, _)| weigh(f.eval(s), &(&dh * &xa), &(&dhh * &xa))).collect(),
            b: rom.b_terms.iter().map(|(f, _)| weigh(f.eval(s), &dh, &dhh)).collect(),
            c: rom.c_terms.iter().map(|(f, _)| weigh(f.eval(s), &hx, &hhx)).collect(),
        })
    });
    let nodes: Vec<L2Node> = nodes.into_iter().collect::<Result<_>>()?;
    let integrate = |pick: &dyn Fn(&L2Node) -> &Vec<(CMat, CMat)>, count: usize| -> Vec<(CMat, CMat)> {
        (0..count)
            .map(|t| {
                let (r0, c0) = pick(&nodes[0])[t].0.shape();
                let (mut lhs, mut rhs) = (MatrixSum::new(r0, c0), MatrixSum::new(r0, c0));
                for (node, w) in nodes.iter().zip(&grid.weights) {
                    let (l, r) = &pick(node)[t];
                    lhs.add_scaled(l, c(w / TWO_PI, 0.0));
                    rhs.add_scaled(r, c(w / TWO_PI, 0.0));
                }
                (lhs.value(), rhs.value())
            })
            .collect()
    };
    let ia = integrate(&|n| &n.a, rom.a_terms.len());
    let ib = integrate(&|n| &n.b, rom.b_terms.len());
    let ic = integrate(&|n| &n.c, rom.c_terms.len());
    let mut records = Vec::new();
    for (t, (l, r)) in ia.iter().enumerate() {
        records.push(ConditionRecord::from_sides("cond-A", vec![t], l, r));
    }
    for (t, (l, r)) in ib.iter().enumerate() {
        records.push(ConditionRecord::from_sides("cond-B", vec![t], l, r));
    }
    for (t, (l, r)) in ic.iter().enumerate() {
        records.push(ConditionRecord::from_sides("cond-C", vec![t], l, r));
    }
    if rom.a_terms.iter().all(|(_, m)| crate::linalg::is_diagonal(m, 0.0)) {
        for (t, (l, r)) in ia.iter().enumerate() {
            for d in 0..rom.order() {
                let one = |m: &CMat| CMat::from_element(1, 1, m[(d, d)]);
                records.push(ConditionRecord::from_sides("cond-A-diag", vec![t, d], &one(l), &one(r)));
            }
        }
    }
    Ok(ConditionReport::new(ConditionFamily::L2Stationarity, records))
}

/// Conditions for diagonal models `Ĥ(s) = Σ c_ℓ b_ℓ* / a_ℓ(s)` with general
/// denominators, summed over the zeros `Λ_ℓ` of each `a_ℓ`:
///
/// * `diag-right [ℓ]`: `Σ_λ H(−λ̄) b_ℓ / conj(a_ℓ'(λ))`
/// * `diag-left [ℓ]`: `Σ_λ c_ℓ* H(−λ̄) / conj(a_ℓ'(λ))`
/// * `diag-hermite [ℓ, i]`: `Σ_λ c_ℓ* [conj(α_i/a_ℓ'²) H'(−λ̄) − conj(α_i'/a_ℓ'² − α_i a_ℓ''/a_ℓ'³) H(−λ̄)] b_ℓ`
///
/// each against the same expression in `Ĥ`.
pub fn residual_general_diag(
    h: &dyn TransferEvaluator,
    rom: &DiagonalStructuredROM,
    pole_sets: &[PoleSet],
) -> Result<ConditionReport> {
    check_shapes(h, rom)?;
    let r = rom.order();
    if pole_sets.len() != r {
        return Err(Error::Dimension(format!("expected {r} pole sets, got {}", pole_sets.len())));
    }
    let mut tagged = Vec::new();
    for (l, set) in pole_sets.iter().enumerate() {
        if set.index != l {
            return Err(Error::InvalidArgument(format!("pole set {l} carries index {}", set.index)));
        }
        check_stable(&set.poles)?;
        tagged.extend(set.poles.iter().map(|z| (*z, l)));
    }
    if let Some((first, second)) = find_collision(&mut tagged) {
        return Err(Error::DisjointnessViolation { first, second });
    }

    let q = rom.a_terms.len();
    let alphas: Vec<_> = rom.a_terms.iter().map(|(f, _)| (f.clone(), f.derivative())).collect();
    let dens: Vec<_> = (0..r)
        .map(|l| {
            let a = rom.denominator(l);
            let da = a.derivative();
            let dda = da.derivative();
            (da, dda)
        })
        .collect();
    let work: Vec<(usize, C64)> = pole_sets.iter().flat_map(|s| s.poles.iter().map(move |z| (s.index, *z))).collect();
    // per pole: right (p×1), left (1×m) and q Hermite scalars, each for H and Ĥ
    let parts: Vec<Result<Vec<(CMat, CMat)>>> = par::map_indexed(work.len(), |n| {
        let (l, lam) = work[n];
        let p = eval_point(h, rom, -lam.conj())?;
        let (bl, cl) = (rom.b_vec(l), rom.c_vec(l));
        let d1 = dens[l].0.eval(lam);
        let d2 = dens[l].1.eval(lam);
        let w = (1.0 / d1).conj();
        let mut out = vec![
            (dense(&(&p.h * &bl * w)), dense(&(&p.hh * &bl * w))),
            (dense(&(cl.adjoint() * &p.h * w)), dense(&(cl.adjoint() * &p.hh * w))),
        ];
        let (hb, hhb) = (bi(&cl, &p.h, &bl), bi(&cl, &p.hh, &bl));
        let (dhb, dhhb) = (bi(&cl, &p.dh, &bl), bi(&cl, &p.dhh, &bl));
        for (f, df) in &alphas {
            let (al, dal) = (f.eval(lam), df.eval(lam));
            let u = (al / (d1 * d1)).conj();
            let v = (dal / (d1 * d1) - al * d2 / (d1 * d1 * d1)).conj();
            out.push((&dhb * u - &hb * v, &dhhb * u - &hhb * v));
        }
        Ok(out)
    });
    let mut sums: Vec<Vec<(MatrixSum, MatrixSum)>> = (0..r)
        .map(|_| {
            let mut v = vec![
                (MatrixSum::new(h.outputs(), 1), MatrixSum::new(h.outputs(), 1)),
                (MatrixSum::new(1, h.inputs()), MatrixSum::new(1, h.inputs())),
            ];
            v.extend((0..q).map(|_| (MatrixSum::new(1, 1), MatrixSum::new(1, 1))));
            v
        })
        .collect();
    let one = c(1.0, 0.0);
    for ((l, _), part) in work.iter().zip(parts) {
        for (acc, (x, y)) in sums[*l].iter_mut().zip(part?) {
            acc.0.add_scaled(&x, one);
            acc.1.add_scaled(&y, one);
        }
    }
    let mut records = Vec::with_capacity(r * (2 + q));
    for (l, acc) in sums.iter().enumerate() {
        records.push(ConditionRecord::from_sides("diag-right", vec![l], &acc[0].0.value(), &acc[0].1.value()));
        records.push(ConditionRecord::from_sides("diag-left", vec![l], &acc[1].0.value(), &acc[1].1.value()));
        for i in 0..q {
            let (x, y) = &acc[2 + i];
            records.push(ConditionRecord::from_sides("diag-hermite", vec![l, i], &x.value(), &y.value()));
        }
    }
    let mut report = ConditionReport::new(ConditionFamily::GeneralDiagonal, records);
    let window = pole_sets.iter().map(|s| s.window).max().unwrap_or(0);
    if window > 0 {
        let tail = pole_sets.iter().map(|s| s.tail).fold(0.0, f64::max);
        report.truncation = Some(Truncation { window, tail, extrapolated: false });
    }
    Ok(report)
}

struct SoPoint {
    plus: Point,
    minus: Point,
    b: CVec,
    c: CVec,
}

fn second_order_points(h: &dyn TransferEvaluator, rom: &SecondOrderROM) -> Result<Vec<SoPoint>> {
    check_shapes(h, rom)?;
    let (plus, minus) = second_order_factorization(rom)?;
    check_stable(&plus)?;
    check_stable(&minus)?;
    let pts = par::map_chunked(rom.order(), 1, |i| {
        Ok(SoPoint {
            plus: eval_point(h, rom, -plus[i].conj())?,
            minus: eval_point(h, rom, -minus[i].conj())?,
            b: rom.b.row(i).transpose().map(|x| c(x, 0.0)),
            c: rom.c.column(i).map(|x| c(x, 0.0)),
        })
    });
    pts.into_iter().collect()
}

/// Difference interpolation and Hermite conditions of a modally damped
/// second-order model `Σ c_i b_iᵀ / ((s − λ_i⁺)(s − λ_i⁻))`.
pub fn residual_second_order(h: &dyn TransferEvaluator, rom: &SecondOrderROM) -> Result<ConditionReport> {
    let pts = second_order_points(h, rom)?;
    let mut records = Vec::with_capacity(4 * pts.len());
    for (i, p) in pts.iter().enumerate() {
        let dh = &p.plus.h - &p.minus.h;
        let dhh = &p.plus.hh - &p.minus.hh;
        records.push(ConditionRecord::from_sides("soc1", vec![i], &(&dh * &p.b), &(&dhh * &p.b)));
        records.push(ConditionRecord::from_sides("soc2", vec![i], &(p.c.adjoint() * &dh), &(p.c.adjoint() * &dhh)));
        records.push(ConditionRecord::from_sides("soc3", vec![i], &bi(&p.c, &p.plus.dh, &p.b), &bi(&p.c, &p.plus.dhh, &p.b)));
        records.push(ConditionRecord::from_sides("soc4", vec![i], &bi(&p.c, &p.minus.dh, &p.b), &bi(&p.c, &p.minus.dhh, &p.b)));
    }
    Ok(ConditionReport::new(ConditionFamily::SecondOrder, records))
}

/// Two-variable function `G(s₁, s₂) = H(s₁) − H(s₂)` with partials.
struct Difference<'a> {
    at1: &'a Point,
    at2: &'a Point,
}

impl Difference<'_> {
    fn g(&self) -> (CMat, CMat) {
        (&self.at1.h - &self.at2.h, &self.at1.hh - &self.at2.hh)
    }
    fn d1(&self) -> (CMat, CMat) {
        (self.at1.dh.clone(), self.at1.dhh.clone())
    }
    fn d2(&self) -> (CMat, CMat) {
        (-&self.at2.dh, -&self.at2.dhh)
    }
}

/// The second-order conditions restated as bitangential Hermite conditions
/// of `G(s₁, s₂) = H(s₁) − H(s₂)` at `(−λ̄⁺, −λ̄⁻)`.
pub fn residual_second_order_2d(h: &dyn TransferEvaluator, rom: &SecondOrderROM) -> Result<ConditionReport> {
    let pts = second_order_points(h, rom)?;
    let mut records = Vec::with_capacity(4 * pts.len());
    for (i, p) in pts.iter().enumerate() {
        let g = Difference { at1: &p.plus, at2: &p.minus };
        let (gv, ghv) = g.g();
        let (g1, gh1) = g.d1();
        let (g2, gh2) = g.d2();
        records.push(ConditionRecord::from_sides("sobh1", vec![i], &(&gv * &p.b), &(&ghv * &p.b)));
        records.push(ConditionRecord::from_sides("sobh2", vec![i], &(p.c.adjoint() * &gv), &(p.c.adjoint() * &ghv)));
        records.push(ConditionRecord::from_sides("sobh3", vec![i], &bi(&p.c, &g1, &p.b), &bi(&p.c, &gh1, &p.b)));
        records.push(ConditionRecord::from_sides("sobh4", vec![i], &bi(&p.c, &g2, &p.b), &bi(&p.c, &gh2, &p.b)));
    }
    Ok(ConditionReport::new(ConditionFamily::SecondOrder2d, records))
}

/// pH conditions using the eigen-decomposition of `J − R`.
pub fn residual_ph(h: &dyn TransferEvaluator, model: &PHModel) -> Result<ConditionReport> {
    residual_ph_with(h, model, &ph_modal_data(model)?)
}

/// As [`residual_ph`] with given modal data, e.g. a rescaled eigenvector
/// matrix.
///
/// Records: `ph-pair [i, j]` for every ordered pair, `ph-hermite [i]`, the
/// matrix condition `ph-tangential`, and when `J − R` is normal
/// `ph-normal-1/2 [i]` together with the same conditions written for
/// `G(s) = H(s) + H(s)*` as `phg1/2/3 [i]`.
pub fn residual_ph_with(h: &dyn TransferEvaluator, model: &PHModel, md: &PhModalData) -> Result<ConditionReport> {
    check_shapes(h, model)?;
    check_stable(&md.lambda)?;
    let r = md.lambda.len();
    let pts: Vec<Point> = par::map_chunked(r, 1, |i| eval_point(h, model, -md.lambda[i].conj()))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(r * r + 2 * r + 1);
    for i in 0..r {
        for j in 0..r {
            let dh = &pts[i].h - &pts[j].h;
            let dhh = &pts[i].hh - &pts[j].hh;
            records.push(ConditionRecord::from_sides("ph-pair", vec![i, j], &bi(&md.c[i], &dh, &md.b[j]), &bi(&md.c[i], &dhh, &md.b[j])));
        }
    }
    for (i, p) in pts.iter().enumerate() {
        records.push(ConditionRecord::from_sides("ph-hermite", vec![i], &bi(&md.c[i], &p.dh, &md.b[i]), &bi(&md.c[i], &p.dhh, &md.b[i])));
    }
    let m = model.inputs();
    let (mut lhs, mut rhs) = (CMat::zeros(m, r), CMat::zeros(m, r));
    for (i, p) in pts.iter().enumerate() {
        let ti = md.t.column(i).adjoint();
        let si = md.s.column(i).adjoint();
        lhs += &p.h * &md.b[i] * &ti + p.h.adjoint() * &md.c[i] * &si;
        rhs += &p.hh * &md.b[i] * &ti + p.hh.adjoint() * &md.c[i] * &si;
    }
    records.push(ConditionRecord::from_sides("ph-tangential", vec![], &lhs, &rhs));
    if md.normal {
        for (i, p) in pts.iter().enumerate() {
            let b = &md.b[i];
            let (sym, symh) = (&p.h + p.h.adjoint(), &p.hh + p.hh.adjoint());
            records.push(ConditionRecord::from_sides("ph-normal-1", vec![i], &(&sym * b), &(&symh * b)));
            records.push(ConditionRecord::from_sides("ph-normal-2", vec![i], &bi(b, &p.dh, b), &bi(b, &p.dhh, b)));
        }
        for (i, p) in pts.iter().enumerate() {
            let b = &md.b[i];
            let (g, gh) = (&p.h + p.h.adjoint(), &p.hh + p.hh.adjoint());
            // H(s)* is antiholomorphic, so ∂G/∂s = H'(s)
            let (dg, dgh) = (&p.dh, &p.dhh);
            records.push(ConditionRecord::from_sides("phg1", vec![i], &(&g * b), &(&gh * b)));
            records.push(ConditionRecord::from_sides("phg2", vec![i], &(b.adjoint() * &g), &(b.adjoint() * &gh)));
            records.push(ConditionRecord::from_sides("phg3", vec![i], &bi(b, dg, b), &bi(b, dgh, b)));
        }
    }
    Ok(ConditionReport::new(ConditionFamily::PortHamiltonian, records))
}

#[cfg(test)]
mod tests;
