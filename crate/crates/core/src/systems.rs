//! Coefficient fields B(t) of the linear Hamiltonian system z' = J B(t) z,
//! their structural metadata, and the catalog of named example systems.
//!
//! Fields are closed-form evaluators (trigonometric sums, torus surfaces, and
//! a few special constructions), so they can be queried at arbitrary times.
//! All fields are immutable after construction.

use crate::error::{Error, Result};
use crate::linalg::{op_norm, sym_residual, RMat};
use std::f64::consts::PI;
use std::sync::Arc;

/// One term of a trigonometric sum: coef * {1, cos, sin}(freq * t + phase).
#[derive(Clone, Debug)]
pub struct Term {
    pub coef: RMat,
    pub mode: Mode,
    pub freq: f64,
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Constant,
    Cos,
    Sin,
}

impl Term {
    fn eval(&self, t: f64) -> f64 {
        match self.mode {
            Mode::Constant => 1.0,
            Mode::Cos => (self.freq * t + self.phase).cos(),
            Mode::Sin => (self.freq * t + self.phase).sin(),
        }
    }
}

/// A continuous surface on the m-torus with values in symmetric matrices,
/// sampled along the line p + q t.
#[derive(Clone, Debug)]
pub struct TorusField {
    pub torus_dim: usize,
    /// Each entry: coefficient matrix, mode, integer wave vector.
    pub surface: Vec<(RMat, Mode, Vec<f64>)>,
    pub base_point: Vec<f64>,
    /// Declared rationally independent frequencies.
    pub frequency: Vec<f64>,
    /// Step u with q_1, ..., q_m, 1/u declared rationally independent.
    pub step: f64,
}

impl TorusField {
    pub fn eval(&self, n: usize, t: f64) -> RMat {
        let mut b = RMat::zeros(n, n);
        for (coef, mode, wave) in &self.surface {
            let mut arg = 0.0;
            for (i, w) in wave.iter().enumerate() {
                arg += w * (self.base_point[i] + self.frequency[i] * t);
            }
            let s = match mode {
                Mode::Constant => 1.0,
                Mode::Cos => arg.cos(),
                Mode::Sin => arg.sin(),
            };
            b += coef * s;
        }
        b
    }
}

#[derive(Clone, Debug)]
pub enum Structure {
    Generic,
    Periodic { period: f64 },
    QuasiPeriodic(TorusField),
    AsymptoticPeriodic { limit: Arc<SymmetricField> },
}

impl Structure {
    pub fn kind(&self) -> &'static str {
        match self {
            Structure::Generic => "generic",
            Structure::Periodic { .. } => "periodic",
            Structure::QuasiPeriodic(_) => "quasi_periodic",
            Structure::AsymptoticPeriodic { .. } => "asymptotic_periodic",
        }
    }
}

/// How the field is evaluated. `TimeMap` composes sign/shift/reversal around
/// evaluators that cannot absorb them algebraically.
#[derive(Clone, Debug)]
enum Evaluator {
    TrigSum(Vec<Term>),
    Torus(TorusField),
    /// B(t) = psi'(t) I - J R(psi) diag(1,-1) R(-psi) for the catalog entry
    /// with psi(t) = pi t sin(ln(1+|t|)). Its fundamental solution is the
    /// closed form R(psi(t)) diag(e^t, e^{-t}).
    OscillatingHyperbolic,
    /// base + amp * exp(-t^2) * I
    GaussianBlend { base: Box<Evaluator>, amp: f64 },
    /// Linear interpolation in a sampled table; clamped outside.
    Tabulated { times: Vec<f64>, mats: Vec<RMat> },
    /// sign * inner(dir * t + offset) with dir in {+1, -1}.
    TimeMap { inner: Box<Evaluator>, dir: f64, offset: f64, sign: f64 },
    /// inner + lambda I
    PlusConst { inner: Box<Evaluator>, lambda: f64 },
}

pub fn osc_hyperbolic_angle(t: f64) -> f64 {
    PI * t * (1.0 + t.abs()).ln().sin()
}

pub fn osc_hyperbolic_angle_rate(t: f64) -> f64 {
    let u = (1.0 + t.abs()).ln();
    PI * (u.sin() + (t.abs() / (1.0 + t.abs())) * u.cos())
}

fn osc_hyperbolic_eval(t: f64) -> RMat {
    let psi = osc_hyperbolic_angle(t);
    let dpsi = osc_hyperbolic_angle_rate(t);
    let (s2, c2) = (2.0 * psi).sin_cos();
    RMat::from_row_slice(2, 2, &[dpsi + s2, -c2, -c2, dpsi - s2])
}

impl Evaluator {
    fn eval(&self, n: usize, t: f64) -> RMat {
        match self {
            Evaluator::TrigSum(terms) => {
                let mut b = RMat::zeros(n, n);
                for term in terms {
                    b += &term.coef * term.eval(t);
                }
                b
            }
            Evaluator::Torus(tf) => tf.eval(n, t),
            Evaluator::OscillatingHyperbolic => osc_hyperbolic_eval(t),
            Evaluator::GaussianBlend { base, amp } => {
                base.eval(n, t) + RMat::identity(n, n) * (amp * (-t * t).exp())
            }
            Evaluator::Tabulated { times, mats } => {
                if t <= times[0] {
                    return mats[0].clone();
                }
                if t >= *times.last().unwrap() {
                    return mats.last().unwrap().clone();
                }
                let i = times.partition_point(|&x| x <= t).min(times.len() - 1);
                let (t0, t1) = (times[i - 1], times[i]);
                let w = (t - t0) / (t1 - t0);
                &mats[i - 1] * (1.0 - w) + &mats[i] * w
            }
            Evaluator::TimeMap { inner, dir, offset, sign } => {
                inner.eval(n, dir * t + offset) * *sign
            }
            Evaluator::PlusConst { inner, lambda } => {
                inner.eval(n, t) + RMat::identity(n, n) * *lambda
            }
        }
    }
}

/// The coefficient field of z' = J B(t) z together with its norm bound and
/// structural tag.
#[derive(Clone, Debug)]
pub struct SymmetricField {
    pub name: String,
    dim_half: usize,
    bound: f64,
    structure: Structure,
    eval: Evaluator,
}

/// Closed-form fundamental solutions available for some catalog entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosedFormPath {
    /// gamma(t) = R(psi(t)) diag(e^t, e^{-t})
    OscillatingHyperbolic,
}

impl SymmetricField {
    pub fn new(
        name: impl Into<String>,
        dim_half: usize,
        bound: f64,
        structure: Structure,
        terms: Vec<Term>,
    ) -> Result<Self> {
        let eval = match &structure {
            Structure::QuasiPeriodic(tf) => Evaluator::Torus(tf.clone()),
            _ => Evaluator::TrigSum(terms),
        };
        Self::from_parts(name, dim_half, bound, structure, eval)
    }

    fn from_parts(
        name: impl Into<String>,
        dim_half: usize,
        bound: f64,
        structure: Structure,
        eval: Evaluator,
    ) -> Result<Self> {
        if dim_half == 0 {
            return Err(Error::InvalidArgument("dim_half must be positive".into()));
        }
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::InvalidArgument(format!("bound K must be positive, got {bound}")));
        }
        let field = SymmetricField { name: name.into(), dim_half, bound, structure, eval };
        field.validate_on_grid(64)?;
        Ok(field)
    }

    pub fn dim_half(&self) -> usize {
        self.dim_half
    }

    /// State-space dimension 2d.
    pub fn dim(&self) -> usize {
        2 * self.dim_half
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn period(&self) -> Option<f64> {
        match &self.structure {
            Structure::Periodic { period } => Some(*period),
            _ => None,
        }
    }

    /// B(t). Errors on non-finite t.
    pub fn evaluate(&self, t: f64) -> Result<RMat> {
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite time {t}")));
        }
        Ok(self.eval.eval(self.dim(), t))
    }

    /// B(t) without the argument check, for inner loops.
    pub fn eval_unchecked(&self, t: f64) -> RMat {
        self.eval.eval(self.dim(), t)
    }

    /// The shifted field B_s(t) = B(s + t).
    pub fn shift(&self, s: f64) -> SymmetricField {
        if let Evaluator::PlusConst { inner, lambda } = &self.eval {
            let base = SymmetricField {
                name: self.name.clone(),
                dim_half: self.dim_half,
                bound: self.bound,
                structure: self.structure.clone(),
                eval: inner.as_ref().clone(),
            };
            let mut shifted = base.shift(s);
            shifted.eval =
                Evaluator::PlusConst { inner: Box::new(shifted.eval), lambda: *lambda };
            return shifted;
        }
        let eval = match &self.eval {
            Evaluator::TrigSum(terms) => Evaluator::TrigSum(
                terms
                    .iter()
                    .map(|term| Term {
                        coef: term.coef.clone(),
                        mode: term.mode,
                        freq: term.freq,
                        phase: term.phase + term.freq * s,
                    })
                    .collect(),
            ),
            Evaluator::Torus(tf) => {
                let mut tf = tf.clone();
                for i in 0..tf.base_point.len() {
                    tf.base_point[i] += tf.frequency[i] * s;
                }
                Evaluator::Torus(tf)
            }
            Evaluator::TimeMap { inner, dir, offset, sign } => Evaluator::TimeMap {
                inner: inner.clone(),
                dir: *dir,
                offset: offset + dir * s,
                sign: *sign,
            },
            other => Evaluator::TimeMap {
                inner: Box::new(other.clone()),
                dir: 1.0,
                offset: s,
                sign: 1.0,
            },
        };
        let structure = match &self.structure {
            Structure::QuasiPeriodic(_) => match &eval {
                Evaluator::Torus(tf) => Structure::QuasiPeriodic(tf.clone()),
                Evaluator::PlusConst { inner, .. } => match inner.as_ref() {
                    Evaluator::Torus(tf) => Structure::QuasiPeriodic(tf.clone()),
                    _ => unreachable!(),
                },
                _ => unreachable!(),
            },
            Structure::AsymptoticPeriodic { limit } => {
                Structure::AsymptoticPeriodic { limit: Arc::new(limit.shift(s)) }
            }
            s => s.clone(),
        };
        SymmetricField {
            name: format!("{}+shift({s})", self.name),
            dim_half: self.dim_half,
            bound: self.bound,
            structure,
            eval,
        }
    }

    /// The reversed field B^-(t) = -B(-t), whose fundamental solution is
    /// t -> gamma(-t).
    pub fn reverse(&self) -> SymmetricField {
        if let Evaluator::PlusConst { inner, lambda } = &self.eval {
            let base = SymmetricField {
                name: self.name.clone(),
                dim_half: self.dim_half,
                bound: self.bound,
                structure: self.structure.clone(),
                eval: inner.as_ref().clone(),
            };
            let mut reversed = base.reverse();
            reversed.eval =
                Evaluator::PlusConst { inner: Box::new(reversed.eval), lambda: -*lambda };
            return reversed;
        }
        let eval = match &self.eval {
            Evaluator::TrigSum(terms) => Evaluator::TrigSum(
                terms
                    .iter()
                    .map(|term| Term {
                        coef: -&term.coef * if term.mode == Mode::Sin { -1.0 } else { 1.0 },
                        mode: term.mode,
                        freq: term.freq,
                        phase: -term.phase,
                    })
                    .collect(),
            ),
            Evaluator::Torus(tf) => {
                let mut tf = tf.clone();
                for (coef, _, _) in tf.surface.iter_mut() {
                    *coef = -coef.clone();
                }
                for q in tf.frequency.iter_mut() {
                    *q = -*q;
                }
                Evaluator::Torus(tf)
            }
            Evaluator::TimeMap { inner, dir, offset, sign } => Evaluator::TimeMap {
                inner: inner.clone(),
                dir: -dir,
                offset: *offset,
                sign: -sign,
            },
            other => Evaluator::TimeMap {
                inner: Box::new(other.clone()),
                dir: -1.0,
                offset: 0.0,
                sign: -1.0,
            },
        };
        let structure = match &self.structure {
            Structure::QuasiPeriodic(_) => match &eval {
                Evaluator::Torus(tf) => Structure::QuasiPeriodic(tf.clone()),
                _ => unreachable!(),
            },
            Structure::AsymptoticPeriodic { limit } => {
                Structure::AsymptoticPeriodic { limit: Arc::new(limit.reverse()) }
            }
            s => s.clone(),
        };
        SymmetricField {
            name: format!("reverse({})", self.name),
            dim_half: self.dim_half,
            bound: self.bound,
            structure,
            eval,
        }
    }

    /// The field B + lambda I, with the bound enlarged accordingly.
    pub fn add_identity(&self, lambda: f64) -> Result<SymmetricField> {
        let n = self.dim();
        let eval = match &self.eval {
            Evaluator::TrigSum(terms) => {
                let mut terms = terms.clone();
                terms.push(Term {
                    coef: RMat::identity(n, n) * lambda,
                    mode: Mode::Constant,
                    freq: 0.0,
                    phase: 0.0,
                });
                Evaluator::TrigSum(terms)
            }
            Evaluator::Torus(tf) => {
                let mut tf = tf.clone();
                tf.surface.push((
                    RMat::identity(n, n) * lambda,
                    Mode::Constant,
                    vec![0.0; tf.torus_dim],
                ));
                Evaluator::Torus(tf)
            }
            Evaluator::PlusConst { inner, lambda: l0 } => {
                Evaluator::PlusConst { inner: inner.clone(), lambda: l0 + lambda }
            }
            other => Evaluator::PlusConst { inner: Box::new(other.clone()), lambda },
        };
        let structure = match &self.structure {
            Structure::QuasiPeriodic(_) => match &eval {
                Evaluator::Torus(tf) => Structure::QuasiPeriodic(tf.clone()),
                _ => unreachable!(),
            },
            Structure::AsymptoticPeriodic { limit } => Structure::AsymptoticPeriodic {
                limit: Arc::new(limit.add_identity(lambda)?),
            },
            s => s.clone(),
        };
        SymmetricField::from_parts(
            format!("{}+{lambda}I", self.name),
            self.dim_half,
            self.bound + lambda.abs(),
            structure,
            eval,
        )
    }

    /// Closed-form fundamental solution, when the construction provides one.
    pub fn closed_form_path(&self) -> Option<ClosedFormPath> {
        match &self.eval {
            Evaluator::OscillatingHyperbolic => Some(ClosedFormPath::OscillatingHyperbolic),
            _ => None,
        }
    }

    /// Spot-check symmetry, the norm bound, and periodicity on a sample grid.
    fn validate_on_grid(&self, points: usize) -> Result<()> {
        for i in 0..points {
            let t = -50.0 + 100.0 * (i as f64 + 0.5) / points as f64;
            let b = self.eval.eval(self.dim(), t);
            let sym = sym_residual(&b);
            if sym > 1e-12 {
                return Err(Error::Construction(format!(
                    "evaluator not symmetric at t = {t}: residual {sym:.3e}"
                )));
            }
            let norm = op_norm(&b);
            if norm > self.bound * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Construction(format!(
                    "norm bound violated at t = {t}: |B| = {norm:.6} > K = {}",
                    self.bound
                )));
            }
            if let Structure::Periodic { period } = self.structure {
                let bp = self.eval.eval(self.dim(), t + period);
                let diff = crate::linalg::max_norm(&(&bp - &b));
                if diff > 1e-10 {
                    return Err(Error::Construction(format!(
                        "declared period {period} violated at t = {t}: |B(t+T)-B(t)| = {diff:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// A tabulated-field adapter for orbit-derived coefficients. Linear
    /// interpolation; not part of the acceptance fixtures.
    pub fn tabulated(
        name: impl Into<String>,
        dim_half: usize,
        bound: f64,
        times: Vec<f64>,
        mats: Vec<RMat>,
    ) -> Result<Self> {
        if times.len() != mats.len() || times.len() < 2 {
            return Err(Error::InvalidArgument("need at least two samples".into()));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("sample times must be strictly increasing".into()));
        }
        Self::from_parts(name, dim_half, bound, Structure::Generic, Evaluator::Tabulated {
            times,
            mats,
        })
    }
}

/// Named parameters for catalog entries.
pub type Params = std::collections::BTreeMap<String, f64>;

fn param(params: &Params, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Construct one of the named example systems.
///
/// Names: constant_k, rotation_k, hyperbolic, periodic_demo,
/// quasi_periodic_demo, example_45, asymptotic_blend.
pub fn catalog(name: &str, params: &Params) -> Result<SymmetricField> {
    match name {
        "constant_k" => {
            let k = param(params, "k", 1.0);
            let d = param(params, "d", 1.0) as usize;
            let period = param(params, "period", 1.0);
            if !k.is_finite() {
                return Err(Error::InvalidArgument("k must be finite".into()));
            }
            let n = 2 * d;
            SymmetricField::new(
                "constant_k",
                d,
                k.abs().max(1e-9),
                Structure::Periodic { period },
                vec![Term {
                    coef: RMat::identity(n, n) * k,
                    mode: Mode::Constant,
                    freq: 0.0,
                    phase: 0.0,
                }],
            )
        }
        "rotation_k" => {
            let k = param(params, "k", 1.0);
            let d = param(params, "d", 1.0) as usize;
            if k == 0.0 || !k.is_finite() {
                return Err(Error::InvalidArgument("rotation_k requires nonzero k".into()));
            }
            let n = 2 * d;
            SymmetricField::new(
                "rotation_k",
                d,
                k.abs(),
                Structure::Periodic { period: 2.0 * PI / k.abs() },
                vec![Term {
                    coef: RMat::identity(n, n) * k,
                    mode: Mode::Constant,
                    freq: 0.0,
                    phase: 0.0,
                }],
            )
        }
        "hyperbolic" => {
            let period = param(params, "period", 1.0);
            SymmetricField::new(
                "hyperbolic",
                1,
                1.0,
                Structure::Periodic { period },
                vec![Term {
                    coef: RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
                    mode: Mode::Constant,
                    freq: 0.0,
                    phase: 0.0,
                }],
            )
        }
        "periodic_demo" => SymmetricField::new(
            "periodic_demo",
            1,
            2.0,
            Structure::Periodic { period: 2.0 * PI },
            vec![
                Term {
                    coef: RMat::identity(2, 2),
                    mode: Mode::Constant,
                    freq: 0.0,
                    phase: 0.0,
                },
                Term {
                    coef: RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
                    mode: Mode::Cos,
                    freq: 1.0,
                    phase: 0.0,
                },
            ],
        ),
        "quasi_periodic_demo" => {
            let tf = TorusField {
                torus_dim: 2,
                surface: vec![
                    (RMat::identity(2, 2) * 1.5, Mode::Constant, vec![0.0, 0.0]),
                    (RMat::identity(2, 2) * 0.3, Mode::Cos, vec![1.0, 0.0]),
                    (RMat::identity(2, 2) * 0.3, Mode::Cos, vec![0.0, 1.0]),
                ],
                base_point: vec![0.0, 0.0],
                frequency: vec![1.0, 2.0f64.sqrt()],
                step: 1.0 / 3.0f64.sqrt(),
            };
            SymmetricField::from_parts(
                "quasi_periodic_demo",
                1,
                2.1,
                Structure::QuasiPeriodic(tf.clone()),
                Evaluator::Torus(tf),
            )
        }
        "example_45" => SymmetricField::from_parts(
            "example_45",
            1,
            1.0 + PI * 2.0f64.sqrt(),
            Structure::Generic,
            Evaluator::OscillatingHyperbolic,
        ),
        "asymptotic_blend" => {
            let amp = param(params, "amp", 0.5);
            let limit = catalog("hyperbolic", params)?;
            let base = Evaluator::TrigSum(vec![Term {
                coef: RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
                mode: Mode::Constant,
                freq: 0.0,
                phase: 0.0,
            }]);
            SymmetricField::from_parts(
                "asymptotic_blend",
                1,
                1.0 + amp.abs(),
                Structure::AsymptoticPeriodic { limit: Arc::new(limit) },
                Evaluator::GaussianBlend { base: Box::new(base), amp },
            )
        }
        other => Err(Error::CatalogMiss(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// System definition documents (JSON)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, serde::Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub name: String,
    pub d: usize,
    #[serde(rename = "K")]
    pub k_bound: f64,
    pub structure: StructureDoc,
    #[serde(default)]
    pub terms: Vec<TermDoc>,
}

#[derive(Clone, Debug, serde::Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StructureDoc {
    pub kind: String,
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default)]
    pub torus: Option<TorusDoc>,
}

#[derive(Clone, Debug, serde::Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TorusDoc {
    pub m: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub u: f64,
    pub surface_terms: Vec<SurfaceTermDoc>,
}

#[derive(Clone, Debug, serde::Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    /// Row-major 2d x 2d symmetric matrix.
    pub coef: Vec<f64>,
    pub mode: String,
    pub frequency: f64,
}

#[derive(Clone, Debug, serde::Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SurfaceTermDoc {
    pub coef: Vec<f64>,
    pub mode: String,
    /// Integer wave vector on the m-torus.
    pub frequency: Vec<f64>,
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "constant" => Ok(Mode::Constant),
        "cos" => Ok(Mode::Cos),
        "sin" => Ok(Mode::Sin),
        other => Err(Error::Config(format!("unknown term mode `{other}`"))),
    }
}

fn coef_matrix(n: usize, flat: &[f64]) -> Result<RMat> {
    if flat.len() != n * n {
        return Err(Error::Config(format!(
            "coefficient matrix must have {} entries, got {}",
            n * n,
            flat.len()
        )));
    }
    let m = RMat::from_row_slice(n, n, flat);
    if sym_residual(&m) > 1e-12 {
        return Err(Error::Construction(format!(
            "coefficient matrix not symmetric (residual {:.3e})",
            sym_residual(&m)
        )));
    }
    Ok(m)
}

/// Build a field from a parsed document, validating the schema and the
/// structural invariants on a sample grid.
pub fn field_from_doc(doc: &SystemDoc) -> Result<SymmetricField> {
    let n = 2 * doc.d;
    match doc.structure.kind.as_str() {
        "generic" | "periodic" => {
            let mut terms = Vec::new();
            for term in &doc.terms {
                terms.push(Term {
                    coef: coef_matrix(n, &term.coef)?,
                    mode: parse_mode(&term.mode)?,
                    freq: term.frequency,
                    phase: 0.0,
                });
            }
            let structure = if doc.structure.kind == "periodic" {
                let period = doc.structure.period.ok_or_else(|| {
                    Error::Config("periodic structure requires `period`".into())
                })?;
                if !(period > 0.0) {
                    return Err(Error::Config("period must be positive".into()));
                }
                Structure::Periodic { period }
            } else {
                Structure::Generic
            };
            SymmetricField::new(doc.name.clone(), doc.d, doc.k_bound, structure, terms)
        }
        "quasi_periodic" => {
            let torus = doc
                .structure
                .torus
                .as_ref()
                .ok_or_else(|| Error::Config("quasi_periodic structure requires `torus`".into()))?;
            if torus.p.len() != torus.m || torus.q.len() != torus.m {
                return Err(Error::Config("torus p and q must have length m".into()));
            }
            if !(torus.u > 0.0) {
                return Err(Error::Config("torus step u must be positive".into()));
            }
            let mut surface = Vec::new();
            for st in &torus.surface_terms {
                if st.frequency.len() != torus.m {
                    return Err(Error::Config("surface term wave vector must have length m".into()));
                }
                for w in &st.frequency {
                    if (w - w.round()).abs() > 1e-9 {
                        return Err(Error::Construction(
                            "surface wave vectors must be integers for continuity on the torus"
                                .into(),
                        ));
                    }
                }
                surface.push((coef_matrix(n, &st.coef)?, parse_mode(&st.mode)?, st.frequency.clone()));
            }
            let tf = TorusField {
                torus_dim: torus.m,
                surface,
                base_point: torus.p.clone(),
                frequency: torus.q.clone(),
                step: torus.u,
            };
            SymmetricField::new(
                doc.name.clone(),
                doc.d,
                doc.k_bound,
                Structure::QuasiPeriodic(tf),
                Vec::new(),
            )
        }
        other => Err(Error::Config(format!(
            "structure kind `{other}` not supported in system files"
        ))),
    }
}

pub fn parse_system_str(text: &str) -> Result<(SystemDoc, SymmetricField)> {
    let doc: SystemDoc =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid system file: {e}")))?;
    let field = field_from_doc(&doc)?;
    Ok((doc, field))
}

/// Canonical serialization of a parsed document: fixed key order, numbers at
/// 17 significant digits. parse -> serialize -> parse is the identity.
pub fn serialize_system(doc: &SystemDoc) -> String {
    use crate::report::JsonValue as V;
    let mut structure = vec![("kind".to_string(), V::Str(doc.structure.kind.clone()))];
    if let Some(p) = doc.structure.period {
        structure.push(("period".into(), V::Num(p)));
    }
    if let Some(t) = &doc.structure.torus {
        structure.push((
            "torus".into(),
            V::Obj(vec![
                ("m".into(), V::Int(t.m as i64)),
                ("p".into(), V::Arr(t.p.iter().map(|&x| V::Num(x)).collect())),
                ("q".into(), V::Arr(t.q.iter().map(|&x| V::Num(x)).collect())),
                ("u".into(), V::Num(t.u)),
                (
                    "surface_terms".into(),
                    V::Arr(
                        t.surface_terms
                            .iter()
                            .map(|st| {
                                V::Obj(vec![
                                    (
                                        "coef".into(),
                                        V::Arr(st.coef.iter().map(|&x| V::Num(x)).collect()),
                                    ),
                                    ("mode".into(), V::Str(st.mode.clone())),
                                    (
                                        "frequency".into(),
                                        V::Arr(st.frequency.iter().map(|&x| V::Num(x)).collect()),
                                    ),
                                ])
                            })
                            .collect(),
                    ),
                ),
            ]),
        ));
    }
    let root = V::Obj(vec![
        ("name".into(), V::Str(doc.name.clone())),
        ("d".into(), V::Int(doc.d as i64)),
        ("K".into(), V::Num(doc.k_bound)),
        ("structure".into(), V::Obj(structure)),
        (
            "terms".into(),
            V::Arr(
                doc.terms
                    .iter()
                    .map(|t| {
                        V::Obj(vec![
                            ("coef".into(), V::Arr(t.coef.iter().map(|&x| V::Num(x)).collect())),
                            ("mode".into(), V::Str(t.mode.clone())),
                            ("frequency".into(), V::Num(t.frequency)),
                        ])
                    })
                    .collect(),
            ),
        ),
    ]);
    root.pretty(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_norm;

    fn no_params() -> Params {
        Params::new()
    }

    fn params(kv: &[(&str, f64)]) -> Params {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn constant_field_evaluates_to_identity() {
        let f = catalog("constant_k", &params(&[("k", 1.0), ("d", 1.0)])).unwrap();
        let b = f.evaluate(7.3).unwrap();
        assert!(max_norm(&(b - RMat::identity(2, 2))) < 1e-15);
        assert_eq!(f.bound(), 1.0);
    }

    #[test]
    fn periodic_demo_at_full_period() {
        let f = catalog("periodic_demo", &no_params()).unwrap();
        let b = f.evaluate(2.0 * PI).unwrap();
        let expect = RMat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(max_norm(&(b - expect)) < 1e-12);
    }

    #[test]
    fn quasi_periodic_at_base_point() {
        let f = catalog("quasi_periodic_demo", &no_params()).unwrap();
        let b = f.evaluate(0.0).unwrap();
        assert!(max_norm(&(b - RMat::identity(2, 2) * 2.1)) < 1e-12);
    }

    #[test]
    fn non_finite_time_rejected() {
        let f = catalog("constant_k", &no_params()).unwrap();
        assert!(matches!(f.evaluate(f64::NAN), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn shift_identity_and_full_period() {
        let f = catalog("periodic_demo", &no_params()).unwrap();
        let s0 = f.shift(0.0);
        let st = f.shift(2.0 * PI);
        for i in 0..20 {
            let t = -8.0 + i as f64;
            let b = f.evaluate(t).unwrap();
            assert!(max_norm(&(s0.evaluate(t).unwrap() - b.clone())) < 1e-12);
            assert!(max_norm(&(st.evaluate(t).unwrap() - b)) < 1e-9);
        }
    }

    #[test]
    fn shift_of_cosine_by_pi() {
        // B(t) = diag(1 + cos t, 1); shifted by pi at t = 0 gives diag(0, 1)
        let f = catalog("periodic_demo", &no_params()).unwrap();
        let b = f.shift(PI).evaluate(0.0).unwrap();
        let expect = RMat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(max_norm(&(b - expect)) < 1e-12);
    }

    #[test]
    fn shifts_compose() {
        let f = catalog("quasi_periodic_demo", &no_params()).unwrap();
        let a = f.shift(1.3).shift(-2.9);
        let b = f.shift(-1.6);
        for i in 0..30 {
            let t = -15.0 + i as f64;
            assert!(max_norm(&(a.evaluate(t).unwrap() - b.evaluate(t).unwrap())) < 1e-12);
        }
    }

    #[test]
    fn reverse_of_constant_negates() {
        let f = catalog("constant_k", &params(&[("k", 2.0)])).unwrap();
        let r = f.reverse();
        let b = r.evaluate(0.7).unwrap();
        assert!(max_norm(&(b + RMat::identity(2, 2) * 2.0)) < 1e-15);
    }

    #[test]
    fn reverse_is_involutive() {
        for name in ["periodic_demo", "quasi_periodic_demo", "example_45", "asymptotic_blend"] {
            let f = catalog(name, &no_params()).unwrap();
            let rr = f.reverse().reverse();
            for i in 0..25 {
                let t = -12.0 + i as f64;
                assert!(
                    max_norm(&(rr.evaluate(t).unwrap() - f.evaluate(t).unwrap())) < 1e-12,
                    "reverse^2 != id for {name} at t = {t}"
                );
            }
        }
    }

    #[test]
    fn reverse_of_even_coefficient() {
        // B(t) = (1 + cos t) I is even, so reverse(B)(t) = -B(t)
        let term = |mode, freq| Term { coef: RMat::identity(2, 2), mode, freq, phase: 0.0 };
        let f = SymmetricField::new(
            "even",
            1,
            2.0,
            Structure::Periodic { period: 2.0 * PI },
            vec![term(Mode::Constant, 0.0), term(Mode::Cos, 1.0)],
        )
        .unwrap();
        let r = f.reverse();
        for i in 0..20 {
            let t = -6.0 + 0.63 * i as f64;
            let sum = r.evaluate(t).unwrap() + f.evaluate(t).unwrap();
            assert!(max_norm(&sum) < 1e-12);
        }
    }

    #[test]
    fn catalog_miss_and_bad_params() {
        assert!(matches!(catalog("nope", &no_params()), Err(Error::CatalogMiss(_))));
        assert!(catalog("rotation_k", &params(&[("k", 0.0)])).is_err());
    }

    #[test]
    fn example_45_bounded_and_symmetric_at_zero() {
        let f = catalog("example_45", &no_params()).unwrap();
        let b = f.evaluate(0.0).unwrap();
        assert!(sym_residual(&b) < 1e-14);
        assert!(op_norm(&b) < 3.0);
        // psi(0) = 0, psi'(0) = 0, so B(0) = -J diag(1,-1)
        let expect = RMat::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(max_norm(&(b - expect)) < 1e-12);
    }

    #[test]
    fn catalog_fields_respect_declared_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for name in [
            "constant_k",
            "rotation_k",
            "hyperbolic",
            "periodic_demo",
            "quasi_periodic_demo",
            "example_45",
            "asymptotic_blend",
        ] {
            let f = catalog(name, &no_params()).unwrap();
            for _ in 0..1000 {
                let t: f64 = rng.gen_range(-50.0..50.0);
                let b = f.eval_unchecked(t);
                assert!(sym_residual(&b) <= 1e-12, "{name} asymmetric at {t}");
                assert!(
                    op_norm(&b) <= f.bound() * (1.0 + 1e-9) + 1e-12,
                    "{name} exceeds bound at {t}: {} > {}",
                    op_norm(&b),
                    f.bound()
                );
            }
        }
    }

    #[test]
    fn asymmetric_document_rejected() {
        let text = r#"{
            "name": "bad", "d": 1, "K": 1.0,
            "structure": {"kind": "generic"},
            "terms": [{"coef": [0.0, 1.0, 0.5, 0.0], "mode": "constant", "frequency": 0.0}]
        }"#;
        assert!(matches!(parse_system_str(text), Err(Error::Construction(_))));
    }

    #[test]
    fn document_round_trip() {
        let text = r#"{
            "name": "demo", "d": 1, "K": 2.5,
            "structure": {"kind": "quasi_periodic", "torus": {
                "m": 2, "p": [0.0, 0.25], "q": [1.0, 1.4142135623730951], "u": 0.5773502691896258,
                "surface_terms": [
                    {"coef": [1.5, 0.0, 0.0, 1.5], "mode": "constant", "frequency": [0.0, 0.0]},
                    {"coef": [0.3, 0.1, 0.1, 0.3], "mode": "cos", "frequency": [1.0, 0.0]},
                    {"coef": [0.3, 0.0, 0.0, 0.3], "mode": "sin", "frequency": [0.0, 1.0]}
                ]
            }},
            "terms": []
        }"#;
        let (doc, field) = parse_system_str(text).unwrap();
        assert_eq!(field.dim_half(), 1);
        let canon = serialize_system(&doc);
        let (doc2, _) = parse_system_str(&canon).unwrap();
        assert_eq!(doc, doc2);
        // canonical form is a fixed point byte-for-byte
        assert_eq!(canon, serialize_system(&doc2));
    }

    #[test]
    fn torus_field_agrees_with_parent_evaluator() {
        let f = catalog("quasi_periodic_demo", &no_params()).unwrap();
        let tf = match f.structure() {
            Structure::QuasiPeriodic(tf) => tf.clone(),
            _ => panic!(),
        };
        for i in 0..40 {
            let t = -10.0 + 0.51 * i as f64;
            let a = f.evaluate(t).unwrap();
            let b = tf.eval(2, t);
            assert!(max_norm(&(a - b)) < 1e-12);
        }
    }

    #[test]
    fn tabulated_adapter_interpolates() {
        let times = vec![0.0, 1.0, 2.0];
        let mats = vec![
            RMat::identity(2, 2),
            RMat::identity(2, 2) * 2.0,
            RMat::identity(2, 2) * 1.0,
        ];
        let f = SymmetricField::tabulated("tab", 1, 2.0, times, mats).unwrap();
        let b = f.evaluate(0.5).unwrap();
        assert!(max_norm(&(b - RMat::identity(2, 2) * 1.5)) < 1e-12);
        let clamped = f.evaluate(5.0).unwrap();
        assert!(max_norm(&(clamped - RMat::identity(2, 2))) < 1e-12);
    }
}
