//! Starting points and multi-start reduction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::h2metric::{auto_grid, FrequencyGrid, GridOptions};
use crate::linalg::{RMat, C64};
use crate::par;
use crate::rng::SplitMix64;
use crate::sysmodel::TransferEvaluator;

use super::{
    make_parameterization, minimize_objective, MinimizeOptions, Objective, OptimizeResult, ParamOptions,
    Parameterization, Structure, Termination,
};

/// Magnitude band `[lo, hi]` of the FOM poles.
fn band(hint: &[C64]) -> (f64, f64) {
    let mags: Vec<f64> = hint.iter().map(|z| z.norm()).filter(|x| *x > 0.0 && x.is_finite()).collect();
    if mags.is_empty() {
        return (0.1, 10.0);
    }
    let lo = mags.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mags.iter().copied().fold(0.0, f64::max);
    (lo, hi.max(lo * 1.0001))
}

/// `n` magnitudes, one per log-spaced cell of the band, jittered.
fn magnitudes(g: &mut SplitMix64, (lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * (i as f64 + g.uniform()) / n as f64).exp()).collect()
}

/// Random feasible starting point with least-squares output residues.
///
/// Poles are placed at log-spaced magnitudes across the FOM's pole band,
/// mirrored into the open left half-plane.
pub fn initial_guess(obj: &Objective, param: &Parameterization, hint: &[C64], g: &mut SplitMix64) -> Result<Vec<f64>> {
    let (r, m) = (param.r, param.m);
    let bnd = band(hint);
    let mut theta = vec![0.0; param.dim()];
    match param.structure {
        Structure::Unstructured | Structure::Delay => {
            let blocks = param.blocks();
            let rho = magnitudes(g, bnd, blocks.len());
            for (blk, rho) in blocks.iter().zip(rho) {
                let at = blk.offset;
                let mut k = at;
                let re = if blk.pair {
                    let phi = g.uniform_in(0.05, 1.45);
                    theta[k] = (rho * phi.cos()).ln();
                    theta[k + 1] = rho * phi.sin();
                    k += 2;
                    rho * phi.cos()
                } else {
                    theta[k] = rho.ln();
                    k += 1;
                    rho
                };
                let w = if blk.pair { 2 } else { 1 };
                if param.is_delay() {
                    for j in 0..w {
                        theta[k + j] = 0.3 * re * g.uniform_in(-1.0, 1.0);
                    }
                    // shrink the delay coefficient until the principal pole is stable
                    for _ in 0..30 {
                        if param.unpack(&theta).is_ok() {
                            break;
                        }
                        for j in 0..w {
                            theta[k + j] *= 0.5;
                        }
                    }
                    k += w;
                }
                for _ in 0..w * (m - 1) {
                    theta[k] = g.normal();
                    k += 1;
                }
            }
        }
        Structure::SecondOrder => {
            let rho = magnitudes(g, bnd, r);
            for (l, rho) in rho.into_iter().enumerate() {
                let zeta = g.uniform_in(0.05, 0.8);
                theta[l] = (2.0 * zeta * rho).ln();
                theta[r + l] = 2.0 * rho.ln();
            }
            for x in &mut theta[2 * r..2 * r + r * m] {
                *x = g.normal();
            }
        }
        Structure::PortHamiltonian => {
            let rho = magnitudes(g, bnd, r);
            let mid = (bnd.0 * bnd.1).sqrt();
            let mut at = 0;
            for _ in 0..r * (r - 1) / 2 {
                theta[at] = g.normal() * mid;
                at += 1;
            }
            for i in 0..r {
                for j in 0..=i {
                    theta[at] = if i == j { (rho[i] * g.uniform_in(0.2, 1.0)).sqrt() } else { 0.1 * mid.sqrt() * g.normal() };
                    at += 1;
                }
            }
            for x in &mut theta[at..] {
                *x = g.normal();
            }
            scale_ph_input(obj, param, &mut theta, at)?;
        }
    }
    param.unpack(&theta)?;
    fit_linear(obj, param, &mut theta)?;
    Ok(theta)
}

/// Scale `B` of a pH model so that `Ĥ = BᵀXB` best matches `H` in norm.
fn scale_ph_input(obj: &Objective, param: &Parameterization, theta: &mut [f64], b_at: usize) -> Result<()> {
    let rom = param.unpack(theta)?;
    let grid = obj.grid();
    let hh = crate::h2metric::sample(&rom, grid)?;
    let (mut num, mut den) = (0.0, 0.0);
    for ((h, x), w) in obj.samples().iter().zip(&hh).zip(&grid.weights) {
        num += w * h.iter().zip(x.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        den += w * x.norm_squared();
    }
    if den > 0.0 && num > 0.0 {
        let s = (num / den).sqrt().sqrt();
        theta[b_at..].iter_mut().for_each(|x| *x *= s);
    }
    Ok(())
}

/// Least-squares solve for the coordinates on which `Ĥ` is linear.
fn fit_linear(obj: &Objective, param: &Parameterization, theta: &mut [f64]) -> Result<()> {
    let lin = param.linear_coords();
    if lin.is_empty() {
        return Ok(());
    }
    let grid = obj.grid();
    let basis: Vec<Vec<crate::linalg::CMat>> = lin
        .iter()
        .map(|&k| {
            let mut t = theta.to_vec();
            lin.iter().for_each(|&j| t[j] = 0.0);
            t[k] = 1.0;
            crate::h2metric::sample(&param.unpack(&t)?, grid)
        })
        .collect::<Result<_>>()?;
    let n = lin.len();
    let mut gram = RMat::zeros(n, n);
    let mut rhs = nalgebra::DVector::zeros(n);
    let inner = |a: &[crate::linalg::CMat], b: &[crate::linalg::CMat]| -> f64 {
        a.iter()
            .zip(b)
            .zip(&grid.weights)
            .map(|((x, y), w)| w * x.iter().zip(y.iter()).map(|(u, v)| (u.conj() * v).re).sum::<f64>())
            .sum()
    };
    for i in 0..n {
        for j in 0..=i {
            let v = inner(&basis[i], &basis[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
        rhs[i] = inner(&basis[i], obj.samples());
    }
    let ridge = 1e-12 * (0..n).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    for i in 0..n {
        gram[(i, i)] += ridge;
    }
    if let Some(x) = gram.cholesky().map(|ch| ch.solve(&rhs)) {
        if x.iter().all(|v| v.is_finite()) {
            for (&k, v) in lin.iter().zip(x.iter()) {
                theta[k] = *v;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReduceOptions {
    pub restarts: usize,
    pub seed: u64,
    pub minimize: MinimizeOptions,
    pub grid: GridOptions,
    pub params: ParamOptions,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            restarts: 10,
            seed: 0,
            minimize: MinimizeOptions::default(),
            grid: GridOptions::default(),
            params: ParamOptions::default(),
        }
    }
}

/// One line per restart.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub restart: usize,
    pub pairs: usize,
    pub cost: Option<f64>,
    pub grad_norm: Option<f64>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub grid_nodes: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ReduceOutcome {
    pub best: OptimizeResult,
    pub param: Parameterization,
    pub grid: FrequencyGrid,
    pub runs: Vec<RunSummary>,
}

/// Rebuilds of the grid when the iterate's poles need a finer one.
const GRID_REFINEMENTS: usize = 2;

fn restart_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Multi-start reduction: independent restarts in parallel, best converged
/// run (or lowest cost if none converged) returned.
pub fn reduce(h: &dyn TransferEvaluator, structure: Structure, r: usize, opts: &ReduceOptions) -> Result<ReduceOutcome> {
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument("at least one restart is needed".into()));
    }
    let (m, p) = (h.inputs(), h.outputs());
    let base = make_parameterization(structure, r, m, p, &opts.params)?;
    let grid = auto_grid(&[h], &opts.grid)?;
    let obj = Objective::new(h, &base, grid.clone())?;
    let hint = h.poles_hint();
    let free_layout = opts.params.pairs.is_none() && matches!(structure, Structure::Unstructured | Structure::Delay) && r >= 2;

    let runs: Vec<Result<(Parameterization, OptimizeResult, FrequencyGrid)>> = par::map_chunked(opts.restarts, 1, |i| {
        let mut g = SplitMix64::new(restart_seed(opts.seed, i));
        let param = if free_layout && i % 2 == 1 {
            make_parameterization(structure, r, m, p, &ParamOptions { pairs: Some(0), ..opts.params })?
        } else {
            base.clone()
        };
        let theta0 = initial_guess(&obj, &param, &hint, &mut g)?;
        let mut res = minimize_objective(&obj, &param, &theta0, &opts.minimize)?;
        let mut used = grid.clone();
        for _ in 0..GRID_REFINEMENTS {
            if opts.grid.nodes.is_some() {
                break;
            }
            let want = auto_grid(&[h, &res.model], &opts.grid)?;
            if want.len() <= used.len() {
                break;
            }
            let finer = Objective::new(h, &param, want.clone())?;
            res = minimize_objective(&finer, &param, &res.theta, &opts.minimize)?;
            used = want;
        }
        Ok((param, res, used))
    });

    let mut summaries = Vec::with_capacity(runs.len());
    let mut best: Option<(Parameterization, OptimizeResult, FrequencyGrid)> = None;
    let mut first_error = None;
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok((param, res, used)) => {
                summaries.push(RunSummary {
                    restart: i,
                    pairs: param.pairs,
                    cost: Some(res.cost),
                    grad_norm: Some(res.grad_norm),
                    iterations: res.iterations,
                    termination: Some(res.termination),
                    grid_nodes: used.len(),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((_, b, _)) => (res.converged(), -res.cost) > (b.converged(), -b.cost),
                };
                if better {
                    best = Some((param, res, used));
                }
            }
            Err(e) => {
                summaries.push(RunSummary {
                    restart: i,
                    pairs: base.pairs,
                    cost: None,
                    grad_norm: None,
                    iterations: 0,
                    termination: None,
                    grid_nodes: grid.len(),
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    match best {
        Some((param, best, grid)) => Ok(ReduceOutcome { best, param, grid, runs: summaries }),
        None => Err(first_error.expect("at least one restart ran")),
    }
}
