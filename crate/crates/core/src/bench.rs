//! Seeded generators of test models and the shipped model corpus.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, to_complex, RMat};
use crate::rng::SplitMix64;
use crate::sysmodel::{save_model, Model, PHModel, SecondOrderFOM, StateSpaceFOM};

/// Redraws allowed before a delay draw is declared unstable.
pub const DELAY_DRAWS: usize = 10;
/// `‖A_τ‖₂ / ‖A‖₂` of generated delay models.
pub const DELAY_RATIO: f64 = 0.3;
/// Shift added to `GGᵀ` in generated dissipation matrices.
pub const PH_SHIFT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    RandomStable,
    MsdChain,
    PhRandom,
    Delay,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-stable" | "random" => Ok(ModelKind::RandomStable),
            "msd-chain" | "msd" => Ok(ModelKind::MsdChain),
            "ph-random" | "ph" => Ok(ModelKind::PhRandom),
            "delay" => Ok(ModelKind::Delay),
            other => Err(Error::InvalidArgument(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Everything needed to regenerate a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n: usize,
    #[serde(default = "one")]
    pub m: usize,
    #[serde(default = "one")]
    pub p: usize,
    pub seed: u64,
    /// Rayleigh damping `E = αM + βK`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

fn one() -> usize {
    1
}

impl ModelSpec {
    pub fn generate(&self) -> Result<Model> {
        match self.kind {
            ModelKind::RandomStable => Ok(Model::StateSpace(gen_random_stable(self.n, self.m, self.p, self.seed)?)),
            ModelKind::MsdChain => Ok(Model::SecondOrder(gen_msd_chain(
                self.n,
                self.alpha.unwrap_or(0.1),
                self.beta.unwrap_or(0.05),
                self.seed,
            )?)),
            ModelKind::PhRandom => Ok(Model::PortHamiltonian(gen_ph_random(self.n, self.m, self.seed)?)),
            ModelKind::Delay => Ok(Model::StateSpace(gen_delay_fom(self.n, self.tau.unwrap_or(0.5), self.seed)?)),
        }
    }
}

fn normal_matrix(g: &mut SplitMix64, rows: usize, cols: usize) -> RMat {
    RMat::from_fn(rows, cols, |_, _| g.normal())
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("model order must be at least 1".into()));
    }
    Ok(())
}

/// `A = Q − D` with `Q` skew and `D` positive diagonal, so `A + Aᵀ ≺ 0`.
pub fn gen_random_stable(n: usize, m: usize, p: usize, seed: u64) -> Result<StateSpaceFOM> {
    check_order(n)?;
    let mut g = SplitMix64::new(seed);
    let q = normal_matrix(&mut g, n, n);
    let mut a = (&q - q.transpose()) * 0.5;
    for i in 0..n {
        a[(i, i)] -= g.uniform_in(0.2, 2.0);
    }
    let b = normal_matrix(&mut g, n, m);
    let cm = normal_matrix(&mut g, p, n);
    let fom = StateSpaceFOM::new(None, a, b, cm, None)?;
    fom.check_stability()?;
    Ok(fom)
}

/// Chain of masses between two walls with springs `k_0 … k_n` and
/// `E = αM + βK`. Input force at the last mass, position of the first as output.
pub fn msd_chain(masses: &[f64], springs: &[f64], alpha: f64, beta: f64) -> Result<SecondOrderFOM> {
    let n = masses.len();
    check_order(n)?;
    if springs.len() != n + 1 {
        return Err(Error::Dimension(format!("{n} masses need {} springs", n + 1)));
    }
    if !(alpha >= 0.0 && beta >= 0.0) || (alpha == 0.0 && beta == 0.0) {
        return Err(Error::InvalidArgument("damping needs α, β ≥ 0, not both zero".into()));
    }
    if masses.iter().chain(springs).any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidArgument("masses and springs must be positive".into()));
    }
    let mut k = RMat::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = springs[i] + springs[i + 1];
        if i + 1 < n {
            k[(i, i + 1)] = -springs[i + 1];
            k[(i + 1, i)] = -springs[i + 1];
        }
    }
    let mm = RMat::from_diagonal(&nalgebra::DVector::from_column_slice(masses));
    let e = &mm * alpha + &k * beta;
    let mut b = RMat::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let mut cm = RMat::zeros(1, n);
    cm[(0, 0)] = 1.0;
    SecondOrderFOM::new(Some(mm), e, k, b, cm)
}

/// [`msd_chain`] with masses and springs drawn from `[0.5, 1.5]`.
pub fn gen_msd_chain(masses: usize, alpha: f64, beta: f64, seed: u64) -> Result<SecondOrderFOM> {
    check_order(masses)?;
    let mut g = SplitMix64::new(seed);
    let ms: Vec<f64> = (0..masses).map(|_| g.uniform_in(0.5, 1.5)).collect();
    let ks: Vec<f64> = (0..=masses).map(|_| g.uniform_in(0.5, 1.5)).collect();
    msd_chain(&ms, &ks, alpha, beta)
}

/// `J` skew, `R = GGᵀ/n + 1e−6·I`, `B` Gaussian.
pub fn gen_ph_random(n: usize, m: usize, seed: u64) -> Result<PHModel> {
    check_order(n)?;
    let mut g = SplitMix64::new(seed);
    let q = normal_matrix(&mut g, n, n);
    let gm = normal_matrix(&mut g, n, n) / (n as f64).sqrt();
    let j = (&q - q.transpose()) * 0.5;
    let r = &gm * gm.transpose() + RMat::identity(n, n) * PH_SHIFT;
    let r = (&r + r.transpose()) * 0.5;
    PHModel::new(j, r, normal_matrix(&mut g, n, m))
}

fn spectral_norm(a: &RMat) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

/// SISO `ẋ = Ax + A_τ x(t − τ) + bu` with `‖A_τ‖₂ = 0.3‖A‖₂`.
///
/// Stability is verified by a right-half-plane root count of the
/// characteristic function and, when `A` and `A_τ` commute, by the
/// principal Lambert W pole of every modal factor. Failing draws are
/// repeated up to [`DELAY_DRAWS`] times.
pub fn gen_delay_fom(n: usize, tau: f64, seed: u64) -> Result<StateSpaceFOM> {
    check_order(n)?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("delay must be positive, got {tau}")));
    }
    let mut g = SplitMix64::new(seed);
    for _ in 0..DELAY_DRAWS {
        let q = normal_matrix(&mut g, n, n);
        let mut a = (&q - q.transpose()) * 0.5;
        for i in 0..n {
            a[(i, i)] -= g.uniform_in(0.5, 2.0);
        }
        let raw = normal_matrix(&mut g, n, n);
        let ad = &raw * (DELAY_RATIO * spectral_norm(&a) / spectral_norm(&raw));
        let b = normal_matrix(&mut g, n, 1);
        let cm = normal_matrix(&mut g, 1, n);
        let fom = StateSpaceFOM::new(None, a, b, cm, Some((ad, tau)))?;
        if delay_stable(&fom) {
            return Ok(fom);
        }
    }
    Err(Error::StabilityCheckFailed { attempts: DELAY_DRAWS })
}

fn delay_stable(fom: &StateSpaceFOM) -> bool {
    if !matches!(fom.right_half_plane_root_count(), Ok(0)) {
        return false;
    }
    let Some((ad, tau)) = &fom.delay else { return true };
    let comm = &fom.a * ad - ad * &fom.a;
    if comm.norm() > 1e-12 * (fom.a.norm() * ad.norm()).max(1e-300) {
        return true;
    }
    // commuting pair: poles are μ + W_k(τσe^{−τμ})/τ per joint eigenpair
    let Ok(dec) = linalg::eig(&to_complex(&fom.a)) else { return true };
    let Some(tinv) = linalg::inverse(&dec.vectors) else { return true };
    let sig = &tinv * to_complex(ad) * &dec.vectors;
    (0..fom.order()).all(|i| crate::spectra::delay_poles(dec.values[i], sig[(i, i)], *tau, 0).is_ok())
}

/// One corpus file and the spec that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub file: String,
    pub spec: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<CorpusEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Generate every entry into `dir`, next to a copy of the manifest.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Parse(format!("{}: {e}", dir.display())))?;
        for e in &self.entries {
            save_model(&e.spec.generate()?, &dir.join(&e.file))?;
        }
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n").map_err(|e| Error::Parse(e.to_string()))
    }
}

/// The corpus shipped with the crate.
pub fn default_manifest() -> Manifest {
    let spec = |kind, n, seed| ModelSpec { kind, n, m: 1, p: 1, seed, alpha: None, beta: None, tau: None };
    let mut entries = Vec::new();
    for seed in 1..=5 {
        entries.push(CorpusEntry { file: format!("random-n10-s{seed}.json"), spec: spec(ModelKind::RandomStable, 10, seed) });
    }
    entries.push(CorpusEntry {
        file: "random-mimo-n8-s7.json".into(),
        spec: ModelSpec { m: 2, p: 2, ..spec(ModelKind::RandomStable, 8, 7) },
    });
    entries.push(CorpusEntry {
        file: "msd-chain-3-s1.json".into(),
        spec: ModelSpec { alpha: Some(0.1), beta: Some(0.05), ..spec(ModelKind::MsdChain, 3, 1) },
    });
    entries.push(CorpusEntry { file: "ph-n8-s1.json".into(), spec: spec(ModelKind::PhRandom, 8, 1) });
    entries.push(CorpusEntry {
        file: "delay-n6-s1.json".into(),
        spec: ModelSpec { tau: Some(0.5), ..spec(ModelKind::Delay, 6, 1) },
    });
    Manifest { entries }
}
