//! JSON model files.
//!
//! Matrices are lists of rows; each entry is either a plain number or a
//! `[re, im]` pair.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DelayROM, ParamSepModel, PHModel, SecondOrderFOM, StateSpaceFOM, TransferEvaluator,
};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, RMat, C64};
use crate::scalarfun::CoefficientFunction;

/// Any model that can be stored in a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    StateSpace(StateSpaceFOM),
    SecondOrder(SecondOrderFOM),
    PortHamiltonian(PHModel),
    Delay(DelayROM),
    ParamSep(ParamSepModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::StateSpace(_) => "state_space",
            Model::SecondOrder(_) => "second_order",
            Model::PortHamiltonian(_) => "ph",
            Model::Delay(_) => "delay",
            Model::ParamSep(_) => "param_sep",
        }
    }

    pub fn order(&self) -> usize {
        match self {
            Model::StateSpace(m) => m.order(),
            Model::SecondOrder(m) => m.order(),
            Model::PortHamiltonian(m) => m.order(),
            Model::Delay(m) => m.order(),
            Model::ParamSep(m) => m.order(),
        }
    }

    fn inner(&self) -> &dyn TransferEvaluator {
        match self {
            Model::StateSpace(m) => m,
            Model::SecondOrder(m) => m,
            Model::PortHamiltonian(m) => m,
            Model::Delay(m) => m,
            Model::ParamSep(m) => m,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FileRepr::from(self)).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: FileRepr = serde_json::from_str(text)?;
        Model::try_from(repr)
    }
}

impl TransferEvaluator for Model {
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
        self.inner().poles_hint()
    }
    fn decay_order(&self) -> u32 {
        self.inner().decay_order()
    }
    fn has_delay(&self) -> bool {
        self.inner().has_delay()
    }
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Model::from_json(&text)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_json() + "\n")
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl From<C64> for Entry {
    fn from(z: C64) -> Self {
        if z.im == 0.0 {
            Entry::Real(z.re)
        } else {
            Entry::Complex([z.re, z.im])
        }
    }
}

impl From<Entry> for C64 {
    fn from(e: Entry) -> Self {
        match e {
            Entry::Real(x) => c(x, 0.0),
            Entry::Complex([re, im]) => c(re, im),
        }
    }
}

type MatRepr = Vec<Vec<Entry>>;

fn cmat_repr(m: &CMat) -> MatRepr {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].into()).collect()).collect()
}

fn rmat_repr(m: &RMat) -> MatRepr {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| Entry::Real(m[(i, j)])).collect()).collect()
}

fn parse_cmat(rows: &MatRepr, name: &str) -> Result<CMat> {
    let nr = rows.len();
    let nc = rows.first().map(|r| r.len()).unwrap_or(0);
    if nr == 0 || nc == 0 {
        return Err(Error::Parse(format!("matrix {name} is empty")));
    }
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Parse(format!("matrix {name} has ragged rows")));
    }
    let mut m = CMat::zeros(nr, nc);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            let z: C64 = (*e).into();
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Parse(format!("matrix {name} has a non-finite entry")));
            }
            m[(i, j)] = z;
        }
    }
    Ok(m)
}

fn parse_rmat(rows: &MatRepr, name: &str) -> Result<RMat> {
    let m = parse_cmat(rows, name)?;
    if m.iter().any(|z| z.im != 0.0) {
        return Err(Error::Parse(format!("matrix {name} must be real")));
    }
    Ok(m.map(|z| z.re))
}

fn parse_vec(v: &[Entry], name: &str) -> Result<Vec<C64>> {
    if v.is_empty() {
        return Err(Error::Parse(format!("vector {name} is empty")));
    }
    Ok(v.iter().map(|e| (*e).into()).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Term {
    coef: CoefficientFunction,
    matrix: MatRepr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FileRepr {
    StateSpace {
        #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
        e: Option<MatRepr>,
        #[serde(rename = "A")]
        a: MatRepr,
        #[serde(rename = "B")]
        b: MatRepr,
        #[serde(rename = "C")]
        c: MatRepr,
        #[serde(rename = "A_tau", default, skip_serializing_if = "Option::is_none")]
        a_tau: Option<MatRepr>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
    SecondOrder {
        #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
        m: Option<MatRepr>,
        #[serde(rename = "E")]
        e: MatRepr,
        #[serde(rename = "K")]
        k: MatRepr,
        #[serde(rename = "B")]
        b: MatRepr,
        #[serde(rename = "C")]
        c: MatRepr,
    },
    Ph {
        #[serde(rename = "J")]
        j: MatRepr,
        #[serde(rename = "R")]
        r: MatRepr,
        #[serde(rename = "B")]
        b: MatRepr,
    },
    Delay {
        mu: Vec<Entry>,
        sigma: Vec<Entry>,
        tau: f64,
        #[serde(rename = "B")]
        b: MatRepr,
        #[serde(rename = "C")]
        c: MatRepr,
    },
    ParamSep {
        a_terms: Vec<Term>,
        b_terms: Vec<Term>,
        c_terms: Vec<Term>,
    },
}

impl From<&Model> for FileRepr {
    fn from(m: &Model) -> Self {
        match m {
            Model::StateSpace(f) => {
                let n = f.order();
                let e = if f.e == RMat::identity(n, n) { None } else { Some(rmat_repr(&f.e)) };
                FileRepr::StateSpace {
                    e,
                    a: rmat_repr(&f.a),
                    b: rmat_repr(&f.b),
                    c: rmat_repr(&f.c),
                    a_tau: f.delay.as_ref().map(|(ad, _)| rmat_repr(ad)),
                    tau: f.delay.as_ref().map(|(_, t)| *t),
                }
            }
            Model::SecondOrder(f) => {
                let n = f.order();
                let mm = if f.m == RMat::identity(n, n) { None } else { Some(rmat_repr(&f.m)) };
                FileRepr::SecondOrder { m: mm, e: rmat_repr(&f.e), k: rmat_repr(&f.k), b: rmat_repr(&f.b), c: rmat_repr(&f.c) }
            }
            Model::PortHamiltonian(p) => FileRepr::Ph { j: rmat_repr(&p.j), r: rmat_repr(&p.r), b: rmat_repr(&p.b) },
            Model::Delay(d) => FileRepr::Delay {
                mu: d.mu.iter().map(|z| (*z).into()).collect(),
                sigma: d.sigma.iter().map(|z| (*z).into()).collect(),
                tau: d.tau,
                b: cmat_repr(&d.b),
                c: cmat_repr(&d.c),
            },
            Model::ParamSep(p) => {
                let terms = |t: &[(CoefficientFunction, CMat)]| {
                    t.iter().map(|(f, m)| Term { coef: f.clone(), matrix: cmat_repr(m) }).collect()
                };
                FileRepr::ParamSep { a_terms: terms(&p.a_terms), b_terms: terms(&p.b_terms), c_terms: terms(&p.c_terms) }
            }
        }
    }
}

impl TryFrom<FileRepr> for Model {
    type Error = Error;

    fn try_from(r: FileRepr) -> Result<Self> {
        Ok(match r {
            FileRepr::StateSpace { e, a, b, c, a_tau, tau } => {
                let delay = match (a_tau, tau) {
                    (Some(ad), Some(t)) => Some((parse_rmat(&ad, "A_tau")?, t)),
                    (None, None) => None,
                    _ => return Err(Error::Parse("A_tau and tau must be given together".into())),
                };
                let e = e.map(|m| parse_rmat(&m, "E")).transpose()?;
                Model::StateSpace(StateSpaceFOM::new(
                    e,
                    parse_rmat(&a, "A")?,
                    parse_rmat(&b, "B")?,
                    parse_rmat(&c, "C")?,
                    delay,
                )?)
            }
            FileRepr::SecondOrder { m, e, k, b, c } => Model::SecondOrder(SecondOrderFOM::new(
                m.map(|x| parse_rmat(&x, "M")).transpose()?,
                parse_rmat(&e, "E")?,
                parse_rmat(&k, "K")?,
                parse_rmat(&b, "B")?,
                parse_rmat(&c, "C")?,
            )?),
            FileRepr::Ph { j, r, b } => {
                Model::PortHamiltonian(PHModel::new(parse_rmat(&j, "J")?, parse_rmat(&r, "R")?, parse_rmat(&b, "B")?)?)
            }
            FileRepr::Delay { mu, sigma, tau, b, c } => Model::Delay(DelayROM::new(
                parse_vec(&mu, "mu")?,
                parse_vec(&sigma, "sigma")?,
                tau,
                parse_cmat(&b, "B")?,
                parse_cmat(&c, "C")?,
            )?),
            FileRepr::ParamSep { a_terms, b_terms, c_terms } => {
                let conv = |t: Vec<Term>, name: &str| -> Result<Vec<(CoefficientFunction, CMat)>> {
                    t.into_iter().map(|x| Ok((x.coef, parse_cmat(&x.matrix, name)?))).collect()
                };
                Model::ParamSep(ParamSepModel::new(
                    conv(a_terms, "a_terms")?,
                    conv(b_terms, "b_terms")?,
                    conv(c_terms, "c_terms")?,
                )?)
            }
        })
    }
}
