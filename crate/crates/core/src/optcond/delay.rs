//! Delay conditions, summed over the Lambert W branches of each
//! characteristic function `s − μ_i − σ_i e^{−τs}`.
//!
//! With `φ = 1/(1 + τ(λ − μ))`, `ψ = φ²` and `ρ = τ²(λ − μ)φ³` at each pole:
//!
//! * `td-cond1`: `(Σ φ̄ H(−λ̄)) b_i`
//! * `td-cond2`: `c_i* (Σ φ̄ H(−λ̄))`
//! * `td-cond3`: `c_i* (Σ ψ̄ H'(−λ̄) − ρ̄ H(−λ̄)) b_i`
//! * `td-cond4`: `c_i* (Σ (φ̄ − ψ̄) H'(−λ̄) + ρ̄ H(−λ̄)) b_i`
//! * `td-merged`: `c_i* (Σ φ̄ H'(−λ̄)) b_i`, the sum of the last two
//!
//! The branch sums converge like `1/J`. Without a fixed window the window is
//! doubled and the partial sums are Richardson extrapolated until two
//! consecutive extrapolations agree.

use super::{check_shapes, eval_point, find_collision, ConditionFamily, ConditionRecord, ConditionReport, Truncation};
use crate::error::{Error, Result};
use crate::linalg::{c, frobenius, CMat, MatrixSum, C64};
use crate::par;
use crate::spectra::DelayDenominator;
use crate::sysmodel::{DelayROM, TransferEvaluator};

/// First window of the adaptive scheme.
pub const DELAY_WINDOW_START: usize = 8;
/// Largest window tried before giving up.
pub const DELAY_WINDOW_CAP: usize = 65536;
/// Relative agreement required between consecutive extrapolations.
pub const DELAY_WINDOW_TOL: f64 = 1e-8;

/// `Σ φ̄H`, `Σ ψ̄H'`, `Σ ρ̄H`, `Σ φ̄H'` for `H` and `Ĥ`.
#[derive(Clone)]
struct Sums([(CMat, CMat); 4]);

impl Sums {
    fn add(&self, other: &Sums) -> Sums {
        let mut out = self.clone();
        for (a, b) in out.0.iter_mut().zip(&other.0) {
            a.0 += &b.0;
            a.1 += &b.1;
        }
        out
    }

    /// `2·self − coarse`
    fn extrapolate(&self, coarse: &Sums) -> Sums {
        let mut out = self.clone();
        for (a, b) in out.0.iter_mut().zip(&coarse.0) {
            a.0 = &a.0 * c(2.0, 0.0) - &b.0;
            a.1 = &a.1 * c(2.0, 0.0) - &b.1;
        }
        out
    }

    /// Largest change to `other`, absolute and relative to the quantity.
    fn distance(&self, other: &Sums) -> (f64, f64) {
        let mut abs = 0.0_f64;
        let mut rel = 0.0_f64;
        for (a, b) in self.0.iter().zip(&other.0) {
            let d = frobenius(&(&a.0 - &b.0)) + frobenius(&(&a.1 - &b.1));
            let scale = frobenius(&a.0) + frobenius(&a.1) + 1e-30;
            abs = abs.max(d);
            rel = rel.max(d / scale);
        }
        (abs, rel)
    }
}

struct Batch {
    sums: Sums,
    poles: Vec<C64>,
    /// Largest single contribution among the outermost labels.
    edge: f64,
}

fn batch(h: &dyn TransferEvaluator, rom: &DelayROM, i: usize, labels: &[i64], outer: i64) -> Result<Batch> {
    let den = DelayDenominator { mu: rom.mu[i], sigma: rom.sigma[i], tau: rom.tau };
    let tau = rom.tau;
    let terms: Vec<Result<(C64, [(CMat, CMat); 4])>> = par::map_indexed(labels.len(), |n| {
        let lam = if rom.sigma[i] == c(0.0, 0.0) { rom.mu[i] } else { den.pole(labels[n])? };
        if !(lam.re < 0.0) {
            return Err(Error::UnstablePole(lam));
        }
        let p = eval_point(h, rom, -lam.conj())?;
        let d = lam - rom.mu[i];
        let phi = 1.0 / (1.0 + tau * d);
        let psi = phi * phi;
        let rho = tau * tau * d * phi * phi * phi;
        let (fb, sb, rb) = (phi.conj(), psi.conj(), rho.conj());
        Ok((lam, [(&p.h * fb, &p.hh * fb), (&p.dh * sb, &p.dhh * sb), (&p.h * rb, &p.hh * rb), (&p.dh * fb, &p.dhh * fb)]))
    });
    let (pz, mz) = (h.outputs(), h.inputs());
    let mut acc: Vec<(MatrixSum, MatrixSum)> = (0..4).map(|_| (MatrixSum::new(pz, mz), MatrixSum::new(pz, mz))).collect();
    let mut poles = Vec::with_capacity(labels.len());
    let mut edge = 0.0_f64;
    let one = c(1.0, 0.0);
    for (k, t) in labels.iter().zip(terms) {
        let (lam, parts) = t?;
        poles.push(lam);
        for (a, (x, y)) in acc.iter_mut().zip(&parts) {
            a.0.add_scaled(x, one);
            a.1.add_scaled(y, one);
        }
        if k.abs() >= outer {
            edge = edge.max(frobenius(&parts[0].0) + frobenius(&parts[0].1));
        }
    }
    let mut it = acc.into_iter().map(|(a, b)| (a.value(), b.value()));
    let sums = Sums([it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]);
    Ok(Batch { sums, poles, edge })
}

fn labels_between(den: &DelayDenominator, inner: Option<usize>, outer: usize) -> Vec<i64> {
    let all = den.branch_labels(outer);
    match inner {
        None => all,
        Some(j) => {
            let keep = den.branch_labels(j);
            let (lo, hi) = (keep[0], *keep.last().unwrap());
            all.into_iter().filter(|k| *k < lo || *k > hi).collect()
        }
    }
}

struct IndexSums {
    sums: Sums,
    poles: Vec<C64>,
    window: usize,
    tail: f64,
    extrapolated: bool,
}

fn index_sums(h: &dyn TransferEvaluator, rom: &DelayROM, i: usize, window: Option<usize>) -> Result<IndexSums> {
    let den = DelayDenominator { mu: rom.mu[i], sigma: rom.sigma[i], tau: rom.tau };
    if rom.sigma[i] == c(0.0, 0.0) {
        // a single pole at μ with φ = ψ = 1, ρ = 0
        let b = batch(h, rom, i, &[0], 0)?;
        return Ok(IndexSums { sums: b.sums, poles: b.poles, window: 0, tail: 0.0, extrapolated: false });
    }
    if let Some(j) = window {
        let b = batch(h, rom, i, &labels_between(&den, None, j), j as i64)?;
        return Ok(IndexSums { sums: b.sums, poles: b.poles, window: j, tail: b.edge, extrapolated: false });
    }
    let mut j = DELAY_WINDOW_START;
    let first = batch(h, rom, i, &labels_between(&den, None, j), j as i64)?;
    let mut partial = first.sums;
    let mut poles = first.poles;
    let mut previous: Option<Sums> = None;
    while j < DELAY_WINDOW_CAP {
        let next = batch(h, rom, i, &labels_between(&den, Some(j), 2 * j), 2 * j as i64)?;
        poles.extend(next.poles);
        let refined = partial.add(&next.sums);
        let extrapolated = refined.extrapolate(&partial);
        j *= 2;
        partial = refined;
        if let Some(prev) = &previous {
            let (abs, rel) = extrapolated.distance(prev);
            if rel <= DELAY_WINDOW_TOL {
                return Ok(IndexSums { sums: extrapolated, poles, window: j, tail: abs, extrapolated: true });
            }
        }
        previous = Some(extrapolated);
    }
    Err(Error::TruncationNotConverged { cap: DELAY_WINDOW_CAP })
}

/// Conditions of a diagonal delay ROM over a fixed branch window `J`, or
/// with an adaptive window when `window` is `None`.
pub fn residual_delay(h: &dyn TransferEvaluator, rom: &DelayROM, window: Option<usize>) -> Result<ConditionReport> {
    check_shapes(h, rom)?;
    let r = rom.order();
    let per: Vec<IndexSums> = (0..r).map(|i| index_sums(h, rom, i, window)).collect::<Result<_>>()?;
    let mut tagged: Vec<(C64, usize)> = per.iter().enumerate().flat_map(|(i, s)| s.poles.iter().map(move |z| (*z, i))).collect();
    if let Some((first, second)) = find_collision(&mut tagged) {
        return Err(Error::DisjointnessViolation { first, second });
    }
    let mut records = Vec::with_capacity(5 * r);
    for (i, s) in per.iter().enumerate() {
        let b = rom.b.row(i).adjoint();
        let cv = rom.c.column(i).into_owned();
        let [(ph, phh), (ps, psh), (rh, rhh), (fh, fhh)] = &s.sums.0;
        let ca = cv.adjoint();
        records.push(ConditionRecord::from_sides("td-cond1", vec![i], &(ph * &b), &(phh * &b)));
        records.push(ConditionRecord::from_sides("td-cond2", vec![i], &(&ca * ph), &(&ca * phh)));
        records.push(ConditionRecord::from_sides("td-cond3", vec![i], &(&ca * (ps - rh) * &b), &(&ca * (psh - rhh) * &b)));
        records.push(ConditionRecord::from_sides(
            "td-cond4",
            vec![i],
            &(&ca * (fh - ps + rh) * &b),
            &(&ca * (fhh - psh + rhh) * &b),
        ));
        records.push(ConditionRecord::from_sides("td-merged", vec![i], &(&ca * fh * &b), &(&ca * fhh * &b)));
    }
    let mut report = ConditionReport::new(ConditionFamily::Delay, records);
    if per.iter().any(|s| s.window > 0) {
        report.truncation = Some(Truncation {
            window: per.iter().map(|s| s.window).max().unwrap_or(0),
            tail: per.iter().map(|s| s.tail).fold(0.0, f64::max),
            extrapolated: per.iter().any(|s| s.extrapolated),
        });
    }
    Ok(report)
}
