//! Full- and reduced-order model types and transfer function evaluation.

mod io;

pub use io::{load_model, save_model, Model};

use crate::error::{Error, Result};
use crate::linalg::{self, c, eig, frobenius, is_diagonal, to_complex, CMat, CVec, Lu, RMat, C64};
use crate::scalarfun::CoefficientFunction as CoefFn;

/// Anything that can produce `H(s)` and `H'(s)`.
pub trait TransferEvaluator: Sync {
    fn inputs(&self) -> usize;
    fn outputs(&self) -> usize;
    fn eval(&self, s: C64) -> Result<CMat>;
    fn eval_derivative(&self, s: C64) -> Result<CMat>;

    /// Approximate locations of the dominant poles, used to size frequency
    /// grids. Empty when unknown.
    fn poles_hint(&self) -> Vec<C64> {
        Vec::new()
    }

    /// Exponent `d` with `‖H(iω)‖² = O(ω^{-d})`.
    fn decay_order(&self) -> u32 {
        2
    }

    fn has_delay(&self) -> bool {
        false
    }
}

/// Evaluates to the zero matrix of a fixed shape.
#[derive(Debug, Clone, Copy)]
pub struct ZeroTransfer {
    pub outputs: usize,
    pub inputs: usize,
}

impl TransferEvaluator for ZeroTransfer {
    fn inputs(&self) -> usize {
        self.inputs
    }
    fn outputs(&self) -> usize {
        self.outputs
    }
    fn eval(&self, _s: C64) -> Result<CMat> {
        Ok(CMat::zeros(self.outputs, self.inputs))
    }
    fn eval_derivative(&self, _s: C64) -> Result<CMat> {
        Ok(CMat::zeros(self.outputs, self.inputs))
    }
    fn decay_order(&self) -> u32 {
        u32::MAX
    }
}

fn factor_at(m: &CMat, s: C64) -> Result<Lu> {
    Lu::factor(m).map_err(|_| Error::SingularAtPoint(s))
}

fn sum_terms(terms: &[(CoefFn, CMat)], s: C64, rows: usize, cols: usize) -> CMat {
    let mut out = CMat::zeros(rows, cols);
    for (f, m) in terms {
        out += m * f.eval(s);
    }
    out
}

fn sum_terms_derivative(terms: &[(CoefFn, CMat)], s: C64, rows: usize, cols: usize) -> CMat {
    let mut out = CMat::zeros(rows, cols);
    for (f, m) in terms {
        out += m * f.derivative().eval(s);
    }
    out
}

/// `Â(s) = Σ α_i(s) Â_i`, `B̂(s) = Σ β_j(s) B̂_j`, `Ĉ(s) = Σ γ_k(s) Ĉ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSepModel {
    pub a_terms: Vec<(CoefFn, CMat)>,
    pub b_terms: Vec<(CoefFn, CMat)>,
    pub c_terms: Vec<(CoefFn, CMat)>,
}

impl ParamSepModel {
    pub fn new(
        a_terms: Vec<(CoefFn, CMat)>,
        b_terms: Vec<(CoefFn, CMat)>,
        c_terms: Vec<(CoefFn, CMat)>,
    ) -> Result<Self> {
        if a_terms.is_empty() || b_terms.is_empty() || c_terms.is_empty() {
            return Err(Error::Dimension("every term list must be nonempty".into()));
        }
        let r = a_terms[0].1.nrows();
        let m = b_terms[0].1.ncols();
        let p = c_terms[0].1.nrows();
        if a_terms.iter().any(|(_, a)| a.shape() != (r, r)) {
            return Err(Error::Dimension("A terms must be square of equal order".into()));
        }
        if b_terms.iter().any(|(_, b)| b.shape() != (r, m)) {
            return Err(Error::Dimension(format!("B terms must be {r}x{m}")));
        }
        if c_terms.iter().any(|(_, cm)| cm.shape() != (p, r)) {
            return Err(Error::Dimension(format!("C terms must be {p}x{r}")));
        }
        Ok(ParamSepModel { a_terms, b_terms, c_terms })
    }

    pub fn order(&self) -> usize {
        self.a_terms[0].1.nrows()
    }

    pub fn a_at(&self, s: C64) -> CMat {
        let r = self.order();
        sum_terms(&self.a_terms, s, r, r)
    }

    pub fn a_prime_at(&self, s: C64) -> CMat {
        let r = self.order();
        sum_terms_derivative(&self.a_terms, s, r, r)
    }

    pub fn b_at(&self, s: C64) -> CMat {
        sum_terms(&self.b_terms, s, self.order(), self.inputs())
    }

    pub fn c_at(&self, s: C64) -> CMat {
        sum_terms(&self.c_terms, s, self.outputs(), self.order())
    }

    /// Whether `B̂` and `Ĉ` are constant in `s`.
    pub fn has_constant_io(&self) -> bool {
        let is_const = |t: &[(CoefFn, CMat)]| t.iter().all(|(f, _)| matches!(f, CoefFn::Constant(_)));
        is_const(&self.b_terms) && is_const(&self.c_terms)
    }
}

impl TransferEvaluator for ParamSepModel {
    fn inputs(&self) -> usize {
        self.b_terms[0].1.ncols()
    }
    fn outputs(&self) -> usize {
        self.c_terms[0].1.nrows()
    }
    fn eval(&self, s: C64) -> Result<CMat> {
        let lu = factor_at(&self.a_at(s), s)?;
        Ok(self.c_at(s) * lu.solve(&self.b_at(s)))
    }
    fn eval_derivative(&self, s: C64) -> Result<CMat> {
        let (r, m, p) = (self.order(), self.inputs(), self.outputs());
        let lu = factor_at(&self.a_at(s), s)?;
        let cs = self.c_at(s);
        let x = lu.solve(&self.b_at(s));
        let xd = lu.solve_adjoint(&cs.adjoint());
        let ap = self.a_prime_at(s);
        let bp = sum_terms_derivative(&self.b_terms, s, r, m);
        let cp = sum_terms_derivative(&self.c_terms, s, p, r);
        Ok(cp * &x + xd.adjoint() * bp - xd.adjoint() * ap * x)
    }
}

/// `E ẋ = A x + A_τ x(t−τ) + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceFOM {
    pub e: RMat,
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub delay: Option<(RMat, f64)>,
}

impl StateSpaceFOM {
    pub fn new(e: Option<RMat>, a: RMat, b: RMat, c: RMat, delay: Option<(RMat, f64)>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(Error::Dimension("A must be square and nonempty".into()));
        }
        let e = e.unwrap_or_else(|| RMat::identity(n, n));
        if e.shape() != (n, n) {
            return Err(Error::Dimension("E must match A".into()));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension("B must have n rows".into()));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::Dimension("C must have n columns".into()));
        }
        if let Some((ad, tau)) = &delay {
            if ad.shape() != (n, n) {
                return Err(Error::Dimension("A_tau must match A".into()));
            }
            if !(*tau > 0.0) || !tau.is_finite() {
                return Err(Error::InvalidArgument(format!("delay must be positive, got {tau}")));
            }
        }
        if Lu::factor(&to_complex(&e)).is_err() {
            return Err(Error::InvalidArgument("E must be invertible".into()));
        }
        Ok(StateSpaceFOM { e, a, b, c, delay })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    fn pencil(&self, s: C64) -> CMat {
        let mut k = to_complex(&self.e) * s - to_complex(&self.a);
        if let Some((ad, tau)) = &self.delay {
            k -= to_complex(ad) * (-s * *tau).exp();
        }
        k
    }

    fn pencil_derivative(&self, s: C64) -> CMat {
        let mut k = to_complex(&self.e);
        if let Some((ad, tau)) = &self.delay {
            k += to_complex(ad) * ((-s * *tau).exp() * *tau);
        }
        k
    }

    /// `E⁻¹A` as a complex matrix.
    pub fn reduced_a(&self) -> CMat {
        let lu = Lu::factor(&to_complex(&self.e)).expect("E checked invertible at construction");
        lu.solve(&to_complex(&self.a))
    }

    pub fn to_param_sep(&self) -> ParamSepModel {
        let mut a_terms = vec![
            (CoefFn::monomial(1), to_complex(&self.e)),
            (CoefFn::real(-1.0), to_complex(&self.a)),
        ];
        if let Some((ad, tau)) = &self.delay {
            let f = CoefFn::linear_combination(vec![(c(-1.0, 0.0), CoefFn::ExpDelay(*tau))]).expect("nonempty");
            a_terms.push((f, to_complex(ad)));
        }
        ParamSepModel {
            a_terms,
            b_terms: vec![(CoefFn::one(), to_complex(&self.b))],
            c_terms: vec![(CoefFn::one(), to_complex(&self.c))],
        }
    }

    /// Asymptotic stability. Delay-free systems use the spectrum of `E⁻¹A`;
    /// delay systems count characteristic roots in the closed right half-plane
    /// by the argument principle.
    pub fn check_stability(&self) -> Result<()> {
        match &self.delay {
            None => {
                let abscissa = linalg::spectral_abscissa(&self.reduced_a())?;
                if abscissa >= -1e-12 {
                    return Err(Error::UnstableSystem(abscissa));
                }
                Ok(())
            }
            Some(_) => {
                let count = self.right_half_plane_root_count()?;
                if count != 0 {
                    return Err(Error::UnstableSystem(f64::NAN));
                }
                Ok(())
            }
        }
    }

    /// Number of zeros of `det(sE − A − e^{−τs}A_τ)` with `Re s ≥ 0`.
    pub fn right_half_plane_root_count(&self) -> Result<i64> {
        let n = self.order();
        let einv = Lu::factor(&to_complex(&self.e)).expect("E invertible");
        let ra = einv.solve(&to_complex(&self.a));
        let mut bound = frobenius(&ra);
        let mut pencil = |s: C64| -> CMat {
            let mut k = CMat::identity(n, n) * s - &ra;
            if let Some((ad, tau)) = &self.delay {
                k -= einv.solve(&to_complex(ad)) * (-s * *tau).exp();
            }
            k
        };
        if let Some((ad, _)) = &self.delay {
            bound += frobenius(&einv.solve(&to_complex(ad)));
        }
        let radius = bound + 1.0;
        // contour parameter: t ∈ [0, 2] along the imaginary axis from +iρ to −iρ,
        // then t ∈ [2, 2 + π] along the arc back to +iρ.
        let point = |t: f64| -> C64 {
            if t <= 2.0 {
                c(0.0, radius * (1.0 - t))
            } else {
                let phi = -std::f64::consts::FRAC_PI_2 + (t - 2.0);
                C64::from_polar(radius, phi)
            }
        };
        let scale = radius.powi(n as i32);
        let det_at = |t: f64, pencil: &mut dyn FnMut(C64) -> CMat| -> Result<C64> {
            let d = linalg::determinant(&pencil(point(t)));
            if d.norm() < 1e-13 * scale {
                return Err(Error::UnstableSystem(0.0));
            }
            Ok(d)
        };
        let t_end = 2.0 + std::f64::consts::PI;
        let mut t = 0.0;
        let mut prev = det_at(t, &mut pencil)?;
        let mut total = 0.0;
        let mut h: f64 = 1e-3;
        while t < t_end {
            let step = h.min(t_end - t);
            let next = det_at(t + step, &mut pencil)?;
            let dphi = (next / prev).arg();
            if dphi.abs() > 0.3 && step > 1e-12 {
                h = step * 0.5;
                continue;
            }
            total += dphi;
            prev = next;
            t += step;
            if dphi.abs() < 0.05 {
                h = (h * 1.5).min(0.05);
            }
        }
        Ok((total / (2.0 * std::f64::consts::PI)).round() as i64)
    }
}

impl TransferEvaluator for StateSpaceFOM {
    fn inputs(&self) -> usize {
        self.b.ncols()
    }
    fn outputs(&self) -> usize {
        self.c.nrows()
    }
    fn eval(&self, s: C64) -> Result<CMat> {
        let lu = factor_at(&self.pencil(s), s)?;
        Ok(to_complex(&self.c) * lu.solve(&to_complex(&self.b)))
    }
    fn eval_derivative(&self, s: C64) -> Result<CMat> {
        let lu = factor_at(&self.pencil(s), s)?;
        let x = lu.solve(&to_complex(&self.b));
        let xd = lu.solve_adjoint(&to_complex(&self.c).transpose());
        Ok(-(xd.adjoint() * self.pencil_derivative(s) * x))
    }
    fn poles_hint(&self) -> Vec<C64> {
        let mut out = linalg::eigenvalues(&self.reduced_a()).unwrap_or_default();
        if let Some((ad, _)) = &self.delay {
            let einv = Lu::factor(&to_complex(&self.e)).expect("E invertible");
            let sum = einv.solve(&(to_complex(&self.a) + to_complex(ad)));
            out.extend(linalg::eigenvalues(&sum).unwrap_or_default());
        }
        out
    }
    fn has_delay(&self) -> bool {
        self.delay.is_some()
    }
}

/// `M q̈ + E q̇ + K q = B u`, `y = C q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderFOM {
    pub m: RMat,
    pub e: RMat,
    pub k: RMat,
    pub b: RMat,
    pub c: RMat,
}

impl SecondOrderFOM {
    pub fn new(m: Option<RMat>, e: RMat, k: RMat, b: RMat, c: RMat) -> Result<Self> {
        let n = k.nrows();
        if n == 0 || k.ncols() != n || e.shape() != (n, n) {
            return Err(Error::Dimension("E and K must be square of equal order".into()));
        }
        let m = m.unwrap_or_else(|| RMat::identity(n, n));
        if m.shape() != (n, n) || b.nrows() != n || c.ncols() != n {
            return Err(Error::Dimension("M, B, C must match K".into()));
        }
        Ok(SecondOrderFOM { m, e, k, b, c })
    }

    pub fn order(&self) -> usize {
        self.k.nrows()
    }

    fn quad(&self, s: C64) -> CMat {
        to_complex(&self.m) * (s * s) + to_complex(&self.e) * s + to_complex(&self.k)
    }

    /// First-order realization with state `[q; q̇]`.
    pub fn to_state_space(&self) -> StateSpaceFOM {
        let n = self.order();
        let mut e1 = RMat::identity(2 * n, 2 * n);
        e1.view_mut((n, n), (n, n)).copy_from(&self.m);
        let mut a1 = RMat::zeros(2 * n, 2 * n);
        a1.view_mut((0, n), (n, n)).copy_from(&RMat::identity(n, n));
        a1.view_mut((n, 0), (n, n)).copy_from(&(-&self.k));
        a1.view_mut((n, n), (n, n)).copy_from(&(-&self.e));
        let mut b1 = RMat::zeros(2 * n, self.b.ncols());
        b1.view_mut((n, 0), (n, self.b.ncols())).copy_from(&self.b);
        let mut c1 = RMat::zeros(self.c.nrows(), 2 * n);
        c1.view_mut((0, 0), (self.c.nrows(), n)).copy_from(&self.c);
        StateSpaceFOM { e: e1, a: a1, b: b1, c: c1, delay: None }
    }

    pub fn to_param_sep(&self) -> ParamSepModel {
        ParamSepModel {
            a_terms: vec![
                (CoefFn::monomial(2), to_complex(&self.m)),
                (CoefFn::monomial(1), to_complex(&self.e)),
                (CoefFn::one(), to_complex(&self.k)),
            ],
            b_terms: vec![(CoefFn::one(), to_complex(&self.b))],
            c_terms: vec![(CoefFn::one(), to_complex(&self.c))],
        }
    }
}

impl TransferEvaluator for SecondOrderFOM {
    fn inputs(&self) -> usize {
        self.b.ncols()
    }
    fn outputs(&self) -> usize {
        self.c.nrows()
    }
    fn eval(&self, s: C64) -> Result<CMat> {
        let lu = factor_at(&self.quad(s), s)?;
        Ok(to_complex(&self.c) * lu.solve(&to_complex(&self.b)))
    }
    fn eval_derivative(&self, s: C64) -> Result<CMat> {
        let lu = factor_at(&self.quad(s), s)?;
        let x = lu.solve(&to_complex(&self.b));
        let xd = lu.solve_adjoint(&to_complex(&self.c).transpose());
        let qp = to_complex(&self.m) * (s * 2.0) + to_complex(&self.e);
        Ok(-(xd.adjoint() * qp * x))
    }
    fn poles_hint(&self) -> Vec<C64> {
        self.to_state_space().poles_hint()
    }
    fn decay_order(&self) -> u32 {
        4
    }
}

/// Modally damped second-order model with `M̂ = I`, `Ê = diag(e)`, `K̂ = diag(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderROM {
    pub e: Vec<f64>,
    pub k: Vec<f64>,
    pub b: RMat,
    pub c: RMat,
}

impl SecondOrderROM {
    pub fn new(e: Vec<f64>, k: Vec<f64>, b: RMat, c: RMat) -> Result<Self> {
        let r = e.len();
        if r == 0 || k.len() != r || b.nrows() != r || c.ncols() != r {
            return Err(Error::Dimension("second-order ROM data must share order r".into()));
        }
        if e.iter().chain(k.iter()).any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidArgument("damping and stiffness must be positive".into()));
        }
        Ok(SecondOrderROM { e, k, b, c })
    }

    pub fn order(&self) -> usize {
        self.e.len()
    }

    /// Accepts a second-order system with `M = I` and diagonal `E`, `K`.
    pub fn from_fom(fom: &SecondOrderFOM) -> Result<Self> {
        let n = fom.order();
        let tol = 1e-14;
        let diag = |m: &RMat| is_diagonal(&to_complex(m), tol);
        if (&fom.m - RMat::identity(n, n)).norm() > tol || !diag(&fom.e) || !diag(&fom.k) {
            return Err(Error::UnsupportedStructure(
                "second-order ROM needs M = I and diagonal E, K".into(),
            ));
        }
        SecondOrderROM::new(
            (0..n).map(|i| fom.e[(i, i)]).collect(),
            (0..n).map(|i| fom.k[(i, i)]).collect(),
            fom.b.clone(),
            fom.c.clone(),
        )
    }

    pub fn to_fom(&self) -> SecondOrderFOM {
        let r = self.order();
        SecondOrderFOM {
            m: RMat::identity(r, r),
            e: RMat::from_diagonal(&nalgebra::DVector::from_vec(self.e.clone())),
            k: RMat::from_diagonal(&nalgebra::DVector::from_vec(self.k.clone())),
            b: self.b.clone(),
            c: self.c.clone(),
        }
    }

    pub fn to_diagonal(&self) -> DiagonalStructuredROM {
        let r = self.order();
        DiagonalStructuredROM {
            a_terms: vec![
                (CoefFn::monomial(2), vec![c(1.0, 0.0); r]),
                (CoefFn::monomial(1), self.e.iter().map(|&x| c(x, 0.0)).collect()),
                (CoefFn::one(), self.k.iter().map(|&x| c(x, 0.0)).collect()),
            ],
            b: to_complex(&self.b),
            c: to_complex(&self.c),
        }
    }
}

impl TransferEvaluator for SecondOrderROM {
    fn inputs(&self) -> usize {
        self.b.ncols()
    }
    fn outputs(&self) -> usize {
        self.c.nrows()
    }
    fn eval(&self, s: C64) -> Result<CMat> {
        let mut h = CMat::zeros(self.outputs(), self.inputs());
        for l in 0..self.order() {
            let q = s * s + s * self.e[l] + self.k[l];
            if q.norm() == 0.0 {
                return Err(Error::SingularAtPoint(s));
            }
            h += to_complex(&(self.c.column(l) * self.b.row(l))) / q;
        }
        Ok(h)
    }
    fn eval_derivative(&self, s: C64) -> Result<CMat> {
        let mut h = CMat::zeros(self.outputs(), self.inputs());
        for l in 0..self.order() {
            let q = s * s + s * self.e[l] + self.k[l];
            if q.norm() == 0.0 {
                return Err(Error::SingularAtPoint(s));
            }
            let qp = s * 2.0 + self.e[l];
            h -= to_complex(&(self.c.column(l) * self.b.row(l))) * (qp / (q * q));
        }
        Ok(h)
    }
    fn poles_hint(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(2 * self.order());
        for (e, k) in self.e.iter().zip(&self.k) {
            let disc = C64::new(e * e - 4.0 * k, 0.0).sqrt();
            out.push((-*e + disc) * 0.5);
            out.push((-*e - disc) * 0.5);
        }
        out
    }
    fn decay_order(&self) -> u32 {
        4
    }
}

/// Roots of `s² + e_ℓ s + k_ℓ` as `(λ⁺, λ⁻)` with `Im λ⁺ ≥ Im λ⁻`, real ties
/// broken by the larger real part going to `λ⁺`.
pub fn second_order_factorization(rom: &SecondOrderROM) -> Result<(Vec<C64>, Vec<C64>)> {
    let r = rom.order();
    let mut plus = Vec::with_capacity(r);
    let mut minus = Vec::with_capacity(r);
    for l in 0..r {
        let (e, k) = (rom.e[l], rom.k[l]);
        let disc = e * e - 4.0 * k;
        if disc.abs() <= 1e-10 * (e * e + 4.0 * k.abs()) {
            return Err(Error::RepeatedRoot { index: l });
        }
        if disc < 0.0 {
            let im = 0.5 * (-disc).sqrt();
            plus.push(c(-0.5 * e, im));
            minus.push(c(-0.5 * e, -im));
        } else {
            let q = -0.5 * (e + e.signum() * disc.sqrt());
            let (r1, r2) = (q, k / q);
            let (hi, lo) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
            plus.push(c(hi, 0.0));
            minus.push(c(lo, 0.0));
        }
    }
    let scale = plus.iter().chain(minus.iter()).map(|z| z.norm()).fold(0.0, f64::max);
    for i in 0..r {
        for j in (i + 1)..r {
            for a in [plus[i], minus[i]] {
                for b in [plus[j], minus[j]] {
                    if (a - b).norm() <= 1e-9 * scale {
                        return Err(Error::CrossIndexCollision { first: i, second: j });
                    }
                }
            }
        }
    }
    Ok((plus, minus))
}

/// Port-Hamiltonian model `ẋ = (J − R)x + Bu`, `y = Bᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct PHModel {
    pub j: RMat,
    pub r: RMat,
    pub b: RMat,
}

impl PHModel {
    pub fn new(j: RMat, r: RMat, b: RMat) -> Result<Self> {
        let n = j.nrows();
        if n == 0 || j.shape() != (n, n) || r.shape() != (n, n) || b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension("J, R must be n×n and B n×m".into()));
        }
        let scale = j.norm().max(r.norm()).max(1.0);
        if (&j + j.transpose()).norm() > 1e-12 * scale {
            return Err(Error::InvalidArgument("J must be skew-symmetric".into()));
        }
        if (&r - r.transpose()).norm() > 1e-12 * scale {
            return Err(Error::InvalidArgument("R must be symmetric".into()));
        }
        let eigs = nalgebra::SymmetricEigen::new(r.clone()).eigenvalues;
        if eigs.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidArgument("R must be positive definite".into()));
        }
        Ok(PHModel { j, r, b })
    }

    pub fn order(&self) -> usize {
        self.j.nrows()
    }

    pub fn system_matrix(&self) -> RMat {
        &self.j - &self.r
    }

    pub fn to_state_space(&self) -> StateSpaceFOM {
        let n = self.order();
        StateSpaceFOM {
            e: RMat::identity(n, n),
            a: self.system_matrix(),
            b: self.b.clone(),
            c: self.b.transpose(),
            delay: None,
        }
    }

    pub fn to_param_sep(&self) -> ParamSepModel {
        self.to_state_space().to_param_sep()
    }
}

impl TransferEvaluator for PHModel {
    fn inputs(&self) -> usize {
        self.b.ncols()
    }
    fn outputs(&self) -> usize {
        self.b.ncols()
    }
    fn eval(&self, s: C64) -> Result<CMat> {
        self.to_state_space().eval(s)
    }
    fn eval_derivative(&self, s: C64) -> Result<CMat> {
        self.to_state_space().eval_derivative(s)
    }
    fn poles_hint(&self) -> Vec<C64> {
        self.to_state_space().poles_hint()
    }
}

/// Spectral data of `J − R` used by the pH optimality conditions.
#[derive(Debug, Clone)]
pub struct PhModalData {
    pub lambda: Vec<C64>,
    /// Eigenvector matrix with columns `t_i`.
    pub t: CMat,
    /// `T^{-*}` with columns `s_i`.
    pub s: CMat,
    /// `b_i = Bᵀ s_i`
    pub b: Vec<CVec>,
    /// `c_i = Bᵀ t_i`
    pub c: Vec<CVec>,
    pub normal: bool,
}

impl PhModalData {
    /// Recompute the vector families for a given eigenvector matrix.
    pub fn with_vectors(lambda: Vec<C64>, t: CMat, bmat: &RMat, normal: bool) -> Result<Self> {
        let tinv = linalg::inverse(&t).ok_or_else(|| Error::NotDiagonalizable("singular eigenvector matrix".into()))?;
        let s = tinv.adjoint();
        let bt = to_complex(&bmat.transpose());
        let r = t.ncols();
        let b = (0..r).map(|i| &bt * s.column(i)).collect();
        let cvec = (0..r).map(|i| &bt * t.column(i)).collect();
        Ok(PhModalData { lambda, t, s, b, c: cvec, normal })
    }
}

/// Relative tolerance of the normality test `‖AAᵀ − AᵀA‖ ≤ tol·‖A‖²`.
pub const NORMALITY_TOL: f64 = 1e-8;

pub fn is_normal(a: &RMat) -> bool {
    let comm = a * a.transpose() - a.transpose() * a;
    comm.norm() <= NORMALITY_TOL * a.norm_squared().max(1e-300)
}

pub fn ph_modal_data(model: &PHModel) -> Result<PhModalData> {
    let a = model.system_matrix();
    let dec = eig(&to_complex(&a))?;
    PhModalData::with_vectors(dec.values, dec.vectors, &model.b, is_normal(&a))
}

/// Diagonal single-delay ROM `(sI − M̂ − e^{−τs}Σ̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayROM {
    pub mu: Vec<C64>,
    pub sigma: Vec<C64>,
    pub tau: f64,
    pub b: CMat,
    pub c: CMat,
}

impl DelayROM {
    pub fn new(mu: Vec<C64>, sigma: Vec<C64>, tau: f64, b: CMat, c: CMat) -> Result<Self> {
        let r = mu.len();
        if r == 0 || sigma.len() != r || b.nrows() != r || c.ncols() != r {
            return Err(Error::Dimension("delay ROM data must share order r".into()));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("delay must be positive, got {tau}")));
        }
        Ok(DelayROM { mu, sigma, tau, b, c })
    }

    pub fn order(&self) -> usize {
        self.mu.len()
    }

    pub fn denominator(&self, l: usize, s: C64) -> C64 {
        s - self.mu[l] - self.sigma[l] * (-s * self.tau).exp()
    }

    pub fn to_diagonal(&self) -> DiagonalStructuredROM {
        let delay = CoefFn::linear_combination(vec![(c(-1.0, 0.0), CoefFn::ExpDelay(self.tau))]).expect("nonempty");
        DiagonalStructuredROM {
            a_terms: vec![
                (CoefFn::monomial(1), vec![c(1.0, 0.0); self.order()]),
                (CoefFn::real(-1.0), self.mu.clone()),
                (delay, self.sigma.clone()),
            ],
            b: self.b.clone(),
            c: self.c.clone(),
        }
    }
}

impl TransferEvaluator for DelayROM {
    fn inputs(&self) -> usize {
        self.b.ncols()
    }
    fn outputs(&self) -> usize {
        self.c.nrows()
    }
    fn eval(&self, s: C64) -> Result<CMat> {
        let mut h = CMat::zeros(self.outputs(), self.inputs());
        for l in 0..self.order() {
            let a = self.denominator(l, s);
            if a.norm() == 0.0 {
                return Err(Error::SingularAtPoint(s));
            }
            h += self.c.column(l) * self.b.row(l) / a;
        }
        Ok(h)
    }
    fn eval_derivative(&self, s: C64) -> Result<CMat> {
        let mut h = CMat::zeros(self.outputs(), self.inputs());
        for l in 0..self.order() {
            let a = self.denominator(l, s);
            if a.norm() == 0.0 {
                return Err(Error::SingularAtPoint(s));
            }
            let ap = 1.0 + self.sigma[l] * self.tau * (-s * self.tau).exp();
            h -= self.c.column(l) * self.b.row(l) * (ap / (a * a));
        }
        Ok(h)
    }
    fn poles_hint(&self) -> Vec<C64> {
        self.mu
            .iter()
            .zip(&self.sigma)
            .map(|(m, s)| {
                crate::spectra::delay_poles(*m, *s, self.tau, 0)
                    .map(|p| p.poles[0])
                    .unwrap_or(m + s)
            })
            .collect()
    }
    fn has_delay(&self) -> bool {
        true
    }
}

/// Model whose matrices `Â_i` are all diagonal, so that
/// `Ĥ(s) = Σ_ℓ c_ℓ b_ℓ* / a_ℓ(s)` with `a_ℓ(s) = Σ_i α_i(s)(Â_i)_{ℓℓ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalStructuredROM {
    /// Coefficient function with the diagonal of the matching matrix.
    pub a_terms: Vec<(CoefFn, Vec<C64>)>,
    pub b: CMat,
    pub c: CMat,
}

impl DiagonalStructuredROM {
    pub fn new(a_terms: Vec<(CoefFn, Vec<C64>)>, b: CMat, c: CMat) -> Result<Self> {
        let r = b.nrows();
        if a_terms.is_empty() || a_terms.iter().any(|(_, d)| d.len() != r) || c.ncols() != r || r == 0 {
            return Err(Error::Dimension("diagonal ROM data must share order r".into()));
        }
        Ok(DiagonalStructuredROM { a_terms, b, c })
    }

    /// First-order pole-residue model `Σ c_ℓ b_ℓ*/(s − λ_ℓ)`.
    pub fn pole_residue(poles: &[C64], b: CMat, c_mat: CMat) -> Result<Self> {
        let r = poles.len();
        DiagonalStructuredROM::new(
            vec![(CoefFn::monomial(1), vec![c(1.0, 0.0); r]), (CoefFn::real(-1.0), poles.to_vec())],
            b,
            c_mat,
        )
    }

    pub fn order(&self) -> usize {
        self.b.nrows()
    }

    /// `a_ℓ` as a coefficient function.
    pub fn denominator(&self, l: usize) -> CoefFn {
        CoefFn::linear_combination(self.a_terms.iter().map(|(f, d)| (d[l], f.clone())).collect())
            .expect("a_terms nonempty")
    }

    /// `c_ℓ = Ĉ e_ℓ`
    pub fn c_vec(&self, l: usize) -> CVec {
        self.c.column(l).into_owned()
    }

    /// `b_ℓ` with `b_ℓ* = e_ℓᵀ B̂`
    pub fn b_vec(&self, l: usize) -> CVec {
        self.b.row(l).adjoint()
    }

    pub fn to_param_sep(&self) -> ParamSepModel {
        ParamSepModel {
            a_terms: self
                .a_terms
                .iter()
                .map(|(f, d)| (f.clone(), CMat::from_diagonal(&CVec::from_vec(d.clone()))))
                .collect(),
            b_terms: vec![(CoefFn::one(), self.b.clone())],
            c_terms: vec![(CoefFn::one(), self.c.clone())],
        }
    }

    /// For first-order models (`a_ℓ(s) = s − λ_ℓ`) the poles `λ_ℓ`.
    pub fn first_order_poles(&self) -> Option<Vec<C64>> {
        let r = self.order();
        let mut poles = Vec::with_capacity(r);
        for l in 0..r {
            let a = self.denominator(l);
            let a0 = a.eval(c(0.0, 0.0));
            let a1 = a.eval(c(1.0, 0.0)) - a0;
            // linear with unit slope: a(s) = s − λ
            let probe = c(0.37, -1.3);
            if (a1 - c(1.0, 0.0)).norm() > 1e-12 || (a.eval(probe) - (probe + a0)).norm() > 1e-12 * (1.0 + a0.norm()) {
                return None;
            }
            poles.push(-a0);
        }
        Some(poles)
    }
}

impl TransferEvaluator for DiagonalStructuredROM {
    fn inputs(&self) -> usize {
        self.b.ncols()
    }
    fn outputs(&self) -> usize {
        self.c.nrows()
    }
    fn eval(&self, s: C64) -> Result<CMat> {
        let mut h = CMat::zeros(self.outputs(), self.inputs());
        for l in 0..self.order() {
            let a = self.denominator(l).eval(s);
            if a.norm() == 0.0 {
                return Err(Error::SingularAtPoint(s));
            }
            h += self.c.column(l) * self.b.row(l) / a;
        }
        Ok(h)
    }
    fn eval_derivative(&self, s: C64) -> Result<CMat> {
        let mut h = CMat::zeros(self.outputs(), self.inputs());
        for l in 0..self.order() {
            let den = self.denominator(l);
            let a = den.eval(s);
            if a.norm() == 0.0 {
                return Err(Error::SingularAtPoint(s));
            }
            let ap = den.derivative().eval(s);
            h -= self.c.column(l) * self.b.row(l) * (ap / (a * a));
        }
        Ok(h)
    }
    fn poles_hint(&self) -> Vec<C64> {
        self.first_order_poles().unwrap_or_default()
    }
}

/// Result of [`to_diagonal`]: the diagonal model and `(T, S)` with `S*Â_iT` diagonal.
#[derive(Debug, Clone)]
pub struct Diagonalization {
    pub rom: DiagonalStructuredROM,
    pub t: CMat,
    pub s: CMat,
}

/// Simultaneously diagonalize the `Â_i` of a model with constant `B̂`, `Ĉ`.
pub fn to_diagonal(model: &ParamSepModel) -> Result<Diagonalization> {
    if !model.has_constant_io() {
        return Err(Error::UnsupportedStructure("diagonalization needs constant B and C".into()));
    }
    let r = model.order();
    let bmat = model.b_at(c(0.0, 0.0));
    let cmat = model.c_at(c(0.0, 0.0));
    let tol = 1e-12;
    if model.a_terms.iter().all(|(_, a)| is_diagonal(a, tol)) {
        let a_terms = model.a_terms.iter().map(|(f, a)| (f.clone(), (0..r).map(|i| a[(i, i)]).collect())).collect();
        let id = CMat::identity(r, r);
        return Ok(Diagonalization { rom: DiagonalStructuredROM::new(a_terms, bmat, cmat)?, t: id.clone(), s: id });
    }
    let a1 = &model.a_terms[0].1;
    let lu1 = Lu::factor(a1).map_err(|_| Error::NotDiagonalizable("leading matrix is singular".into()))?;
    let q = model.a_terms.len();
    let reduced: Vec<CMat> = model.a_terms[1..].iter().map(|(_, a)| lu1.solve(a)).collect();
    let probe = if q <= 2 {
        reduced.first().cloned().unwrap_or_else(|| CMat::zeros(r, r))
    } else {
        // a fixed generic combination separates the joint spectrum
        let mut m = CMat::zeros(r, r);
        for (i, ri) in reduced.iter().enumerate() {
            let w = c(1.0 + 0.618_033_988_749_895 * i as f64, 0.271_828_182_845_904_5 * (i + 1) as f64);
            m += ri * w;
        }
        m
    };
    let dec = eig(&probe)?;
    let t = dec.vectors;
    let tinv = linalg::inverse(&t).ok_or_else(|| Error::NotDiagonalizable("singular eigenvector matrix".into()))?;
    let s_adj = &tinv * lu1.solve(&CMat::identity(r, r));
    let mut a_terms = Vec::with_capacity(q);
    for (f, a) in &model.a_terms {
        let d = &s_adj * a * &t;
        let scale = frobenius(a).max(frobenius(&d)).max(1e-300);
        let mut off = 0.0_f64;
        for i in 0..r {
            for j in 0..r {
                if i != j {
                    off = off.max(d[(i, j)].norm());
                }
            }
        }
        if off > 1e-8 * scale {
            return Err(if q > 2 {
                Error::MoreThanTwoTerms
            } else {
                Error::NotDiagonalizable("transformed matrix is not diagonal".into())
            });
        }
        a_terms.push((f.clone(), (0..r).map(|i| d[(i, i)]).collect()));
    }
    let rom = DiagonalStructuredROM::new(a_terms, &s_adj * bmat, cmat * &t)?;
    verify_same_transfer(model, &rom)?;
    Ok(Diagonalization { rom, t, s: s_adj.adjoint() })
}

fn verify_same_transfer(a: &dyn TransferEvaluator, b: &dyn TransferEvaluator) -> Result<()> {
    for w in [0.173, 0.91, 2.7, 11.3] {
        let s = c(0.0, w);
        let (ha, hb) = match (a.eval(s), b.eval(s)) {
            (Ok(x), Ok(y)) => (x, y),
            _ => continue,
        };
        let scale = frobenius(&ha).max(1e-300);
        if frobenius(&(&ha - &hb)) > 1e-8 * scale {
            return Err(Error::NotDiagonalizable("diagonal form does not reproduce the transfer function".into()));
        }
    }
    Ok(())
}

/// Diagonalize a delay-free state-space FOM into `a_ℓ(s) = s − λ_ℓ` form.
pub fn state_space_to_diagonal(fom: &StateSpaceFOM) -> Result<Diagonalization> {
    if fom.delay.is_some() {
        return Err(Error::UnsupportedStructure("delay systems have no first-order diagonal form".into()));
    }
    let d = to_diagonal(&fom.to_param_sep())?;
    let poles: Vec<C64> = d.rom.a_terms[1].1.clone();
    // normalize to a_ℓ(s) = s − λ_ℓ form
    let lead = &d.rom.a_terms[0].1;
    let mut b = d.rom.b.clone();
    for l in 0..poles.len() {
        let scale = lead[l];
        for j in 0..b.ncols() {
            b[(l, j)] /= scale;
        }
    }
    let poles: Vec<C64> = poles.iter().zip(lead).map(|(p, e)| p / e).collect();
    let rom = DiagonalStructuredROM::pole_residue(&poles, b, d.rom.c.clone())?;
    Ok(Diagonalization { rom, t: d.t, s: d.s })
}
