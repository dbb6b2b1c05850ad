//! The squared H2 error, exact inner products for rational models and the
//! frequency quadrature used for everything else.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, compensated_sum_f64, frobenius, to_complex, CMat, Lu, RMat, C64};
use crate::par;
use crate::spectra::{polynomial_roots, PoleSet};
use crate::sysmodel::{DiagonalStructuredROM, StateSpaceFOM, TransferEvaluator};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Nodes and weights for `∫_ℝ f(ω) dω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Scale `Ω` of the substitution `ω = Ω tan θ`.
    pub half_width: f64,
    pub decay_order: u32,
    /// `∫_{|ω|>ω_max} (ω_max/|ω|)^d dω / 2π`: multiplied by the integrand at
    /// the outermost node this bounds the neglected tail.
    pub tail: f64,
}

impl FrequencyGrid {
    /// Grid from explicit nodes and weights.
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, decay_order: u32) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.len() < 2 {
            return Err(Error::InvalidArgument("grid needs matching node and weight lists".into()));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("grid nodes must be strictly increasing".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("grid weights must be positive".into()));
        }
        let n = nodes.len();
        if (0..n).any(|k| nodes[k] != -nodes[n - 1 - k] || weights[k] != weights[n - 1 - k]) {
            return Err(Error::InvalidArgument("grid must be symmetric about zero".into()));
        }
        let omega_max = nodes[n - 1];
        let tail = tail_factor(omega_max, decay_order);
        Ok(FrequencyGrid { nodes, weights, half_width: omega_max, decay_order, tail })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn omega_max(&self) -> f64 {
        *self.nodes.last().expect("grid is nonempty")
    }

    /// `Σ w_k f(ω_k)` with compensated summation.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        compensated_sum_f64(self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)))
    }

    /// Same grid with a different assumed decay order.
    pub fn with_decay_order(&self, d: u32) -> Self {
        let mut g = self.clone();
        g.decay_order = d;
        g.tail = tail_factor(self.omega_max(), d);
        g
    }
}

fn tail_factor(omega_max: f64, d: u32) -> f64 {
    if d <= 1 {
        return f64::INFINITY;
    }
    if d > 64 {
        return 0.0;
    }
    // two symmetric tails of ∫ (ω_max/ω)^d dω, divided by 2π
    2.0 * omega_max / ((d - 1) as f64) / TWO_PI
}

/// Midpoint rule in `θ` after `ω = Ω tan θ`, `θ ∈ (−π/2, π/2)`.
///
/// For rational integrands with enough decay the mapped integrand is smooth
/// and periodic in `θ`, so the rule converges geometrically.
pub fn build_grid(half_width: f64, nodes: usize, decay_order: u32) -> Result<FrequencyGrid> {
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::InvalidArgument(format!("grid scale must be positive, got {half_width}")));
    }
    if nodes < 16 || nodes % 2 != 0 {
        return Err(Error::InvalidArgument(format!("grid needs an even node count of at least 16, got {nodes}")));
    }
    let h = std::f64::consts::PI / nodes as f64;
    let half = nodes / 2;
    // build the positive half and mirror it so the grid is exactly symmetric
    let mut pos_nodes = Vec::with_capacity(half);
    let mut pos_weights = Vec::with_capacity(half);
    for k in 0..half {
        let th = (k as f64 + 0.5) * h;
        let sec = 1.0 / th.cos();
        pos_nodes.push(half_width * th.tan());
        pos_weights.push(h * half_width * sec * sec);
    }
    let mut xs = Vec::with_capacity(nodes);
    let mut ws = Vec::with_capacity(nodes);
    for k in (0..half).rev() {
        xs.push(-pos_nodes[k]);
        ws.push(pos_weights[k]);
    }
    xs.extend_from_slice(&pos_nodes);
    ws.extend_from_slice(&pos_weights);
    let mut g = FrequencyGrid::new(xs, ws, decay_order)?;
    g.half_width = half_width;
    Ok(g)
}

/// Overrides for the automatic grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub nodes: Option<usize>,
    pub scale: Option<f64>,
    pub decay_order: Option<u32>,
}

pub const DEFAULT_NODES: usize = 1024;
pub const MAX_AUTO_NODES: usize = 65536;
pub const DELAY_NODES: usize = 131072;

/// Grid sized from the pole hints of the given models.
///
/// `Ω` is the geometric mean of the smallest and largest pole magnitudes.
/// The node count is chosen so that the pole closest to the real `θ` axis
/// (after the substitution) is resolved to roughly machine precision.
pub fn auto_grid(models: &[&dyn TransferEvaluator], opts: &GridOptions) -> Result<FrequencyGrid> {
    let poles: Vec<C64> = models.iter().flat_map(|m| m.poles_hint()).filter(|p| p.norm() > 0.0).collect();
    let decay = opts
        .decay_order
        .unwrap_or_else(|| models.iter().map(|m| m.decay_order()).min().unwrap_or(2).min(64));
    let has_delay = models.iter().any(|m| m.has_delay());
    let scale = opts.scale.unwrap_or_else(|| {
        if poles.is_empty() {
            return 1.0;
        }
        let lo = poles.iter().map(|p| p.norm()).fold(f64::INFINITY, f64::min);
        let hi = poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
        (lo * hi).sqrt()
    });
    let nodes = match opts.nodes {
        Some(n) => n,
        None if has_delay => DELAY_NODES,
        None => {
            let strip = poles
                .iter()
                .map(|p| {
                    // s = iω = λ puts the pole at ω = −iλ
                    let w = c(p.im, -p.re) / scale;
                    w.atan().im.abs()
                })
                .fold(f64::INFINITY, f64::min);
            if strip.is_finite() && strip > 0.0 {
                let want = (20.0 / strip).ceil() as usize;
                (want + want % 2).clamp(DEFAULT_NODES, MAX_AUTO_NODES)
            } else {
                DEFAULT_NODES
            }
        }
    };
    build_grid(scale, nodes, decay)
}

/// Quadrature value with its tail uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H2Estimate {
    pub value: f64,
    pub uncertainty: f64,
}

/// `H(iω_k)` at every node, in node order.
pub fn sample(h: &dyn TransferEvaluator, grid: &FrequencyGrid) -> Result<Vec<CMat>> {
    par::map_indexed(grid.len(), |k| h.eval(c(0.0, grid.nodes[k]))).into_iter().collect()
}

fn estimate(grid: &FrequencyGrid, sq: &[f64]) -> H2Estimate {
    let value = compensated_sum_f64(sq.iter().zip(&grid.weights).map(|(f, w)| w * f)) / TWO_PI;
    let edge = sq[0].max(sq[sq.len() - 1]);
    let uncertainty = if grid.tail == 0.0 || edge == 0.0 { 0.0 } else { grid.tail * edge };
    H2Estimate { value, uncertainty }
}

/// `J = (1/2π) Σ w_k ‖H(iω_k) − Ĥ(iω_k)‖_F²`.
pub fn h2_error_quadrature(
    h: &dyn TransferEvaluator,
    hhat: &dyn TransferEvaluator,
    grid: &FrequencyGrid,
) -> Result<H2Estimate> {
    check_shapes(h, hhat)?;
    let sq: Vec<f64> = par::map_indexed(grid.len(), |k| {
        let s = c(0.0, grid.nodes[k]);
        let d = h.eval(s)? - hhat.eval(s)?;
        Ok(d.norm_squared())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(estimate(grid, &sq))
}

/// As [`h2_error_quadrature`] with `H` already sampled on `grid`.
pub fn h2_error_sampled(samples: &[CMat], hhat: &dyn TransferEvaluator, grid: &FrequencyGrid) -> Result<H2Estimate> {
    if samples.len() != grid.len() {
        return Err(Error::Dimension("sample count does not match the grid".into()));
    }
    let sq: Vec<f64> = par::map_indexed(grid.len(), |k| {
        let d = &samples[k] - hhat.eval(c(0.0, grid.nodes[k]))?;
        Ok(d.norm_squared())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(estimate(grid, &sq))
}

/// `‖H‖²` by quadrature.
pub fn h2_norm_sq_quadrature(h: &dyn TransferEvaluator, grid: &FrequencyGrid) -> Result<H2Estimate> {
    let sq: Vec<f64> = par::map_indexed(grid.len(), |k| Ok(h.eval(c(0.0, grid.nodes[k]))?.norm_squared()))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(estimate(grid, &sq))
}

fn check_shapes(h: &dyn TransferEvaluator, hhat: &dyn TransferEvaluator) -> Result<()> {
    if h.inputs() != hhat.inputs() || h.outputs() != hhat.outputs() {
        return Err(Error::Dimension(format!(
            "transfer shapes differ: {}x{} vs {}x{}",
            h.outputs(),
            h.inputs(),
            hhat.outputs(),
            hhat.inputs()
        )));
    }
    Ok(())
}

/// Lyapunov solves switch from the Kronecker system to Bartels–Stewart above
/// this order.
pub const KRONECKER_MAX_ORDER: usize = 40;

/// `‖H‖_{H2} = sqrt(tr(C P Cᵀ))` with `(E⁻¹A) P + P (E⁻¹A)ᵀ + E⁻¹B (E⁻¹B)ᵀ = 0`.
pub fn h2_norm_gramian(fom: &StateSpaceFOM) -> Result<f64> {
    if fom.delay.is_some() {
        return Err(Error::UnsupportedStructure("delay systems have no Gramian H2 norm here".into()));
    }
    let lu = Lu::factor(&to_complex(&fom.e)).map_err(|_| Error::SingularAtPoint(c(0.0, 0.0)))?;
    let a = linalg::real_part(&lu.solve(&to_complex(&fom.a)));
    let b = linalg::real_part(&lu.solve(&to_complex(&fom.b)));
    let abscissa = linalg::spectral_abscissa(&to_complex(&a))?;
    if abscissa >= -1e-12 {
        return Err(Error::UnstableSystem(abscissa));
    }
    if fom.c.iter().all(|x| *x == 0.0) || b.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let q: RMat = &b * b.transpose();
    let p = if a.nrows() <= KRONECKER_MAX_ORDER { linalg::lyapunov_kronecker(&a, &q)? } else { linalg::lyapunov_schur(&a, &q)? };
    let t = (&fom.c * p * fom.c.transpose()).trace();
    Ok(t.max(0.0).sqrt())
}

/// Zeros of each polynomial denominator `a_ℓ` of a diagonal model, checked
/// to be simple and stable.
pub fn rational_pole_sets(rom: &DiagonalStructuredROM) -> Result<Vec<PoleSet>> {
    (0..rom.order())
        .map(|l| {
            let a = rom.denominator(l);
            let coeffs = a.polynomial_coefficients().ok_or_else(|| {
                Error::UnsupportedStructure(format!("denominator {l} is not a polynomial"))
            })?;
            let roots = polynomial_roots(&coeffs)?;
            let da = a.derivative();
            for z in &roots {
                if z.re >= 0.0 {
                    return Err(Error::UnstablePole(*z));
                }
                if da.eval(*z).norm() <= 1e-10 * (1.0 + z.norm()) {
                    return Err(Error::NotASimpleZero { c: *z });
                }
            }
            let mut set = PoleSet::rational(l, roots);
            set.index = l;
            Ok(set)
        })
        .collect()
}

/// `(1/2π)∫ tr(H(iω)* G(iω)) dω` by residues at the poles of `G`:
/// the conjugate of `Σ_ℓ Σ_λ c_ℓ* H(−λ̄) b_ℓ / conj(a_ℓ'(λ))`.
pub fn h2_inner_rational(g: &DiagonalStructuredROM, h: &dyn TransferEvaluator) -> Result<C64> {
    check_shapes(g, h)?;
    let sets = rational_pole_sets(g)?;
    let mut acc = linalg::CompensatedSum::default();
    for set in &sets {
        let l = set.index;
        let da = g.denominator(l).derivative();
        let cl = g.c_vec(l);
        let bl = g.b_vec(l);
        for lam in &set.poles {
            let hm = h.eval(-lam.conj())?;
            let v = (cl.adjoint() * hm * &bl)[(0, 0)];
            acc.add(v / da.eval(*lam).conj());
        }
    }
    Ok(acc.value().conj())
}

/// `‖G‖_{H2}` of a diagonal model with polynomial denominators.
pub fn h2_norm_rational(g: &DiagonalStructuredROM) -> Result<f64> {
    Ok(h2_inner_rational(g, g)?.re.max(0.0).sqrt())
}

/// Maximum `‖H(iω) − Ĥ(iω)‖_F` over the grid; used for reporting.
pub fn max_error_on_grid(h: &dyn TransferEvaluator, hhat: &dyn TransferEvaluator, grid: &FrequencyGrid) -> Result<f64> {
    let v: Vec<f64> = par::map_indexed(grid.len(), |k| {
        let s = c(0.0, grid.nodes[k]);
        Ok(frobenius(&(h.eval(s)? - hhat.eval(s)?)))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(v.into_iter().fold(0.0, f64::max))
}
