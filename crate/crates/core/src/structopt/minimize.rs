//! BFGS with Armijo backtracking on `J(θ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::h2metric::FrequencyGrid;
use crate::linalg::RMat;
use crate::sysmodel::TransferEvaluator;

use super::{Evaluation, Objective, Parameterization, Rom, Structure};

/// Longest first trial step in `θ`; keeps log-parameters from jumping
/// across several decades in one iteration.
const MAX_STEP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Sufficient-decrease constant `c₁`.
    pub armijo_c1: f64,
    /// Step reduction factor per backtracking step.
    pub backtrack: f64,
    pub max_halvings: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { max_iter: 2000, grad_tol: 1e-9, armijo_c1: 1e-4, backtrack: 0.5, max_halvings: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::GradientTolerance => "gradient-tolerance",
            Termination::MaxIterations => "max-iterations",
            Termination::LineSearchFailure => "line-search-failure",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    /// Accepted step length; zero for the starting point.
    pub step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeResult {
    #[serde(skip)]
    pub model: Rom,
    pub structure: Structure,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub grid_nodes: usize,
    pub grid_scale: f64,
    pub trace: Vec<TraceEntry>,
}

impl OptimizeResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::GradientTolerance
    }
}

pub fn minimize(
    h: &dyn TransferEvaluator,
    param: &Parameterization,
    theta0: &[f64],
    grid: &FrequencyGrid,
    opts: &MinimizeOptions,
) -> Result<OptimizeResult> {
    let obj = Objective::new(h, param, grid.clone())?;
    minimize_objective(&obj, param, theta0, opts)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn minimize_objective(obj: &Objective, param: &Parameterization, theta0: &[f64], opts: &MinimizeOptions) -> Result<OptimizeResult> {
    let mut theta = theta0.to_vec();
    let mut cur: Evaluation = obj
        .evaluate(param, &theta)
        .ok_or_else(|| Error::InvalidArgument("starting parameters do not give a feasible model".into()))?;
    let d = theta.len();
    let mut hinv = RMat::identity(d, d);
    let mut scaled = false;
    let mut trace = vec![TraceEntry { iteration: 0, cost: cur.cost, grad_norm: cur.grad_norm(), step: 0.0 }];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    for it in 1..=opts.max_iter + 1 {
        if cur.grad_norm() < opts.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        if it > opts.max_iter {
            break;
        }
        let g = nalgebra::DVector::from_column_slice(&cur.gradient);
        let mut dir: Vec<f64> = (-(&hinv * &g)).iter().copied().collect();
        let mut slope = dot(&cur.gradient, &dir);
        if !(slope < 0.0) {
            hinv = RMat::identity(d, d);
            dir = cur.gradient.iter().map(|x| -x).collect();
            slope = -dot(&cur.gradient, &cur.gradient);
        }
        let mut t = (MAX_STEP / norm(&dir)).min(1.0);
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(x, s)| x + t * s).collect();
            if let Some(e) = obj.evaluate(param, &trial) {
                if e.cost <= cur.cost + opts.armijo_c1 * t * slope {
                    accepted = Some((trial, e));
                    break;
                }
            }
            t *= opts.backtrack;
        }
        let Some((next, e)) = accepted else {
            if it == 1 {
                return Err(Error::LineSearchFailure { halvings: opts.max_halvings });
            }
            termination = Termination::LineSearchFailure;
            break;
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = e.gradient.iter().zip(&cur.gradient).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if !scaled {
                hinv *= sy / dot(&y, &y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let sv = nalgebra::DVector::from_column_slice(&s);
            let yv = nalgebra::DVector::from_column_slice(&y);
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            // H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ, expanded
            hinv += (&sv * sv.transpose()) * (rho * rho * yhy + rho) - (&hy * sv.transpose() + &sv * hy.transpose()) * rho;
        }
        theta = next;
        cur = e;
        iterations = it;
        trace.push(TraceEntry { iteration: it, cost: cur.cost, grad_norm: cur.grad_norm(), step: t });
    }
    let model = param.unpack(&theta)?;
    Ok(OptimizeResult {
        model,
        structure: param.structure,
        grad_norm: cur.grad_norm(),
        cost: cur.cost,
        theta,
        iterations,
        termination,
        grid_nodes: obj.grid().len(),
        grid_scale: obj.grid().half_width,
        trace,
    })
}
