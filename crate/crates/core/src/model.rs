//! Cascade models: the law of `(N, A_1, A_2, …)`.
//!
//! A model is either a finite list of atoms (exact computations available)
//! or a parametric sampler (simulation only). Complex-valued weights are
//! supported in finite-atom mode; their "hat" model replaces every entry by
//! its modulus.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand_distr::{Distribution, LogNormal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::{primitivity_exponent, wielandt_bound, CMatrix, Matrix, Scalar};
use crate::rng::CounterRng;
use crate::spectral::{perron, PerronTriple};

/// Probability sums further than this from one are rejected at load time.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;
/// Maximum |ρ − 1| for which the normalization assumption is accepted.
pub const RHO_TOLERANCE: f64 = 1e-9;
/// Draws used to estimate the mean matrix of a sampler-backed model.
pub const SAMPLER_MEAN_DRAWS: usize = 20_000;
const SAMPLER_MEAN_KEY: u64 = 0x5EED_0F_4EA7;

/// One realization of `(N, A_1, …, A_N)` and its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom<T: Scalar = f64> {
    pub prob: f64,
    pub matrices: Vec<Matrix<T>>,
}

impl<T: Scalar> Atom<T> {
    pub fn n_children(&self) -> usize {
        self.matrices.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SamplerFamily {
    /// i.i.d. entries `exp(mu + sigma·Z)`.
    LogNormal { mu: f64, sigma: f64 },
    /// i.i.d. entries uniform on `[low, high)`.
    Uniform { low: f64, high: f64 },
}

/// Fixed offspring count with i.i.d. random entries, all multiplied by `scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub family: SamplerFamily,
    pub n_children: usize,
    pub scale: f64,
}

impl SamplerSpec {
    /// Draws one offspring configuration into `out` (resized to `n_children`).
    pub fn draw_into(&self, p: usize, rng: &mut CounterRng, out: &mut Vec<Matrix>) {
        out.resize_with(self.n_children, || Matrix::zeros(p));
        match self.family {
            SamplerFamily::LogNormal { mu, sigma } => {
                let d = LogNormal::new(mu, sigma).expect("validated at load");
                for m in out.iter_mut() {
                    for i in 0..p {
                        for j in 0..p {
                            m.set(i, j, self.scale * d.sample(rng));
                        }
                    }
                }
            }
            SamplerFamily::Uniform { low, high } => {
                let d = Uniform::new(low, high).expect("validated at load");
                for m in out.iter_mut() {
                    for i in 0..p {
                        for j in 0..p {
                            m.set(i, j, self.scale * d.sample(rng));
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Law {
    Real(Vec<Atom<f64>>),
    Complex(Vec<Atom<Complex64>>),
    Sampler(SamplerSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

/// The law of `(N, A_1, A_2, …)` over p×p weights. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeModel {
    p: usize,
    law: Law,
}

impl CascadeModel {
    /// Builds a real finite-atom model, applying the load-time checks.
    pub fn from_atoms(p: usize, atoms: Vec<Atom>) -> Result<Self> {
        check_atoms(p, &atoms, |a, k, m| {
            for i in 0..p {
                for j in 0..p {
                    let v = m.get(i, j);
                    if !v.is_finite() {
                        return Err(Error::NonFinite { atom: a, matrix: k });
                    }
                    if v < 0.0 {
                        return Err(Error::NegativeEntry {
                            atom: a,
                            matrix: k,
                            row: i,
                            col: j,
                            value: v,
                        });
                    }
                }
            }
            Ok(())
        })?;
        Ok(CascadeModel {
            p,
            law: Law::Real(renormalize(atoms)?),
        })
    }

    pub fn from_complex_atoms(p: usize, atoms: Vec<Atom<Complex64>>) -> Result<Self> {
        check_atoms(p, &atoms, |a, k, m| {
            if m.all_finite() {
                Ok(())
            } else {
                Err(Error::NonFinite { atom: a, matrix: k })
            }
        })?;
        Ok(CascadeModel {
            p,
            law: Law::Complex(renormalize(atoms)?),
        })
    }

    pub fn from_sampler(p: usize, spec: SamplerSpec) -> Result<Self> {
        if p == 0 {
            return Err(Error::Dimension("p must be at least 1".into()));
        }
        let ok = match spec.family {
            SamplerFamily::LogNormal { mu, sigma } => {
                mu.is_finite() && sigma.is_finite() && sigma >= 0.0
            }
            SamplerFamily::Uniform { low, high } => {
                low.is_finite() && high.is_finite() && 0.0 <= low && low < high
            }
        };
        if !ok || !(spec.scale.is_finite() && spec.scale > 0.0) {
            return Err(Error::Parse(format!("invalid sampler parameters {spec:?}")));
        }
        Ok(CascadeModel {
            p,
            law: Law::Sampler(spec),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn field(&self) -> Field {
        match self.law {
            Law::Complex(_) => Field::Complex,
            _ => Field::Real,
        }
    }

    pub fn is_finite_atom(&self) -> bool {
        !matches!(self.law, Law::Sampler(_))
    }

    /// Real atoms, or an error for sampler and complex models.
    pub fn real_atoms(&self) -> Result<&[Atom]> {
        match &self.law {
            Law::Real(a) => Ok(a),
            Law::Complex(_) => Err(Error::WrongField { expected: "real" }),
            Law::Sampler(_) => Err(Error::SamplerUnsupported),
        }
    }

    pub fn complex_atoms(&self) -> Result<&[Atom<Complex64>]> {
        match &self.law {
            Law::Complex(a) => Ok(a),
            Law::Real(_) => Err(Error::WrongField {
                expected: "complex",
            }),
            Law::Sampler(_) => Err(Error::SamplerUnsupported),
        }
    }

    /// Atoms of the absolute-value model: real atoms as-is, complex atoms
    /// with every entry replaced by its modulus.
    pub fn hat_atoms(&self) -> Result<Vec<Atom>> {
        match &self.law {
            Law::Real(a) => Ok(a.clone()),
            Law::Complex(a) => Ok(a
                .iter()
                .map(|at| Atom {
                    prob: at.prob,
                    matrices: at.matrices.iter().map(|m| m.abs()).collect(),
                })
                .collect()),
            Law::Sampler(_) => Err(Error::SamplerUnsupported),
        }
    }

    /// The absolute-value model as a real model (identity for real models).
    pub fn hat(&self) -> Result<CascadeModel> {
        Ok(CascadeModel {
            p: self.p,
            law: Law::Real(self.hat_atoms()?),
        })
    }

    /// Multiplies every weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> CascadeModel {
        let law = match &self.law {
            Law::Real(atoms) => Law::Real(scale_atoms(atoms, c)),
            Law::Complex(atoms) => Law::Complex(scale_atoms(atoms, Complex64::new(c, 0.0))),
            Law::Sampler(s) => Law::Sampler(SamplerSpec {
                scale: s.scale * c,
                ..s.clone()
            }),
        };
        CascadeModel { p: self.p, law }
    }

    /// Probability of `N = 0`.
    pub fn zero_offspring_probability(&self) -> f64 {
        match &self.law {
            Law::Real(a) => a
                .iter()
                .filter(|x| x.matrices.is_empty())
                .map(|x| x.prob)
                .fold(0.0, |s, q| s + q),
            Law::Complex(a) => a
                .iter()
                .filter(|x| x.matrices.is_empty())
                .map(|x| x.prob)
                .fold(0.0, |s, q| s + q),
            Law::Sampler(s) => {
                if s.n_children == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `E N`.
    pub fn mean_offspring(&self) -> f64 {
        match &self.law {
            Law::Real(a) => a.iter().map(|x| x.prob * x.n_children() as f64).sum(),
            Law::Complex(a) => a.iter().map(|x| x.prob * x.n_children() as f64).sum(),
            Law::Sampler(s) => s.n_children as f64,
        }
    }

    /// `M = E Σ_k A_k` (of the hat model in complex mode). Sampler models are
    /// estimated with a fixed internal seed; the second element carries the
    /// entrywise standard error in that case.
    pub fn mean_matrix(&self) -> (Matrix, Option<Matrix>) {
        match &self.law {
            Law::Real(atoms) => (atom_mean(self.p, atoms), None),
            Law::Complex(_) => (
                atom_mean(self.p, &self.hat_atoms().expect("finite-atom")),
                None,
            ),
            Law::Sampler(s) => {
                let p = self.p;
                let mut rng = CounterRng::new(SAMPLER_MEAN_KEY);
                let mut buf = Vec::new();
                let mut sum = Matrix::zeros(p);
                let mut sumsq = Matrix::<f64>::zeros(p);
                for _ in 0..SAMPLER_MEAN_DRAWS {
                    s.draw_into(p, &mut rng, &mut buf);
                    let mut tot = Matrix::zeros(p);
                    for m in &buf {
                        tot.add_assign(m);
                    }
                    sum.add_assign(&tot);
                    sumsq.add_assign(&tot.map(|x| x * x));
                }
                let r = SAMPLER_MEAN_DRAWS as f64;
                let mean = sum.scale(1.0 / r);
                let mut se = Matrix::zeros(p);
                for i in 0..p {
                    for j in 0..p {
                        let m = mean.get(i, j);
                        let var = (sumsq.get(i, j) / r - m * m).max(0.0) * r / (r - 1.0);
                        se.set(i, j, (var / r).sqrt());
                    }
                }
                (mean, Some(se))
            }
        }
    }

    /// `E Σ_k A_k` over the complex weights themselves.
    pub fn complex_mean_matrix(&self) -> Option<CMatrix> {
        match &self.law {
            Law::Complex(atoms) => Some(atom_mean(self.p, atoms)),
            _ => None,
        }
    }

    /// SHA-256 of the canonical model file.
    pub fn model_id(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_string().as_bytes()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_model()
    }
}

fn check_atoms<T: Scalar>(
    p: usize,
    atoms: &[Atom<T>],
    entry_check: impl Fn(usize, usize, &Matrix<T>) -> Result<()>,
) -> Result<()> {
    if p == 0 {
        return Err(Error::Dimension("p must be at least 1".into()));
    }
    if atoms.is_empty() {
        return Err(Error::Parse(
            "finite-atom model needs at least one atom".into(),
        ));
    }
    for (a, atom) in atoms.iter().enumerate() {
        if !(atom.prob > 0.0 && atom.prob <= 1.0) {
            return Err(Error::Probability(atom.prob));
        }
        for (k, m) in atom.matrices.iter().enumerate() {
            if m.dim() != p {
                return Err(Error::Dimension(format!(
                    "atom {a} matrix {k} is {0}×{0}, expected {p}×{p}",
                    m.dim()
                )));
            }
            entry_check(a, k, m)?;
        }
    }
    Ok(())
}

fn renormalize<T: Scalar>(mut atoms: Vec<Atom<T>>) -> Result<Vec<Atom<T>>> {
    let sum: f64 = atoms.iter().map(|a| a.prob).fold(0.0, |s, q| s + q);
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(Error::ProbabilitySum { sum });
    }
    if sum != 1.0 {
        for a in &mut atoms {
            a.prob /= sum;
        }
    }
    Ok(atoms)
}

fn scale_atoms<T: Scalar>(atoms: &[Atom<T>], c: T) -> Vec<Atom<T>> {
    atoms
        .iter()
        .map(|a| Atom {
            prob: a.prob,
            matrices: a.matrices.iter().map(|m| m.scale(c)).collect(),
        })
        .collect()
}

fn atom_mean<T: Scalar>(p: usize, atoms: &[Atom<T>]) -> Matrix<T> {
    let mut m = Matrix::zeros(p);
    for a in atoms {
        for x in &a.matrices {
            m.add_scaled(x, T::from_real(a.prob));
        }
    }
    m
}

/// Reads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<CascadeModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    CascadeModel::from_json_str(&text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AssumptionStatus {
    Holds,
    Fails { reason: String },
}

impl AssumptionStatus {
    pub fn holds(&self) -> bool {
        matches!(self, AssumptionStatus::Holds)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub field: Field,
    pub mean_matrix: Matrix,
    /// Entrywise Monte Carlo standard error (sampler models only).
    pub mean_matrix_stderr: Option<Matrix>,
    pub primitive: bool,
    pub primitivity_exponent: Option<u32>,
    pub wielandt_bound: u32,
    pub perron: Option<PerronTriple>,
    pub spectral_radius_deviation: Option<f64>,
    pub assumption_h: AssumptionStatus,
    pub zero_offspring_probability: f64,
    pub mean_offspring: f64,
    pub matrix_norm: &'static str,
    /// Complex models: `‖M V − V‖_∞` for the complex mean matrix `M` and
    /// the hat eigenvector `V`. Zero means `E Y_n = V` for the complex martingale.
    pub complex_mean_residual: Option<f64>,
}

pub const MATRIX_NORM_NAME: &str = "entrywise absolute sum";

/// Checks finiteness, primitivity and the unit spectral radius of the mean matrix.
pub fn validate_model(model: &CascadeModel) -> ValidationReport {
    let (mean, stderr) = model.mean_matrix();
    let exponent = if mean.all_finite() {
        primitivity_exponent(&mean)
    } else {
        None
    };
    let primitive = exponent.is_some();
    let perron_triple = if primitive { perron(&mean).ok() } else { None };
    let deviation = perron_triple.as_ref().map(|t| (t.rho - 1.0).abs());
    let assumption_h = if !mean.all_finite() {
        AssumptionStatus::Fails {
            reason: "mean matrix is not finite".into(),
        }
    } else if !primitive {
        AssumptionStatus::Fails {
            reason: format!(
                "mean matrix is not primitive (no positive power up to {})",
                wielandt_bound(model.p())
            ),
        }
    } else {
        match (&perron_triple, deviation) {
            (Some(_), Some(d)) if d <= RHO_TOLERANCE => AssumptionStatus::Holds,
            (Some(t), Some(_)) => AssumptionStatus::Fails {
                reason: format!(
                    "spectral radius is {} instead of 1; call normalize_model",
                    t.rho
                ),
            },
            _ => AssumptionStatus::Fails {
                reason: "Perron data could not be computed".into(),
            },
        }
    };
    let complex_mean_residual = match (model.complex_mean_matrix(), &perron_triple) {
        (Some(cm), Some(t)) => {
            let v: Vec<Complex64> = t.v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let mv = cm.mul_vec(&v);
            Some(
                mv.iter()
                    .zip(&v)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max),
            )
        }
        _ => None,
    };
    ValidationReport {
        field: model.field(),
        mean_matrix: mean,
        mean_matrix_stderr: stderr,
        primitive,
        primitivity_exponent: exponent,
        wielandt_bound: wielandt_bound(model.p()),
        perron: perron_triple,
        spectral_radius_deviation: deviation,
        assumption_h,
        zero_offspring_probability: model.zero_offspring_probability(),
        mean_offspring: model.mean_offspring(),
        matrix_norm: MATRIX_NORM_NAME,
        complex_mean_residual,
    }
}

/// Rescales every weight by `1/ρ` so the mean matrix has spectral radius one.
pub fn normalize_model(model: &CascadeModel) -> Result<CascadeModel> {
    let (mean, _) = model.mean_matrix();
    if mean.norm() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    if primitivity_exponent(&mean).is_none() {
        return Err(Error::NotPrimitive);
    }
    let rho = perron(&mean)?.rho;
    if rho == 1.0 {
        return Ok(model.clone());
    }
    Ok(model.scaled(1.0 / rho))
}

// ---- file format ----------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Debug, Serialize, Deserialize)]
struct AtomFile {
    prob: f64,
    matrices: Vec<Vec<Vec<Entry>>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SamplerFile {
    family: String,
    params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    p: usize,
    #[serde(default = "default_field")]
    field: Field,
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    atoms: Option<Vec<AtomFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sampler: Option<SamplerFile>,
}

fn default_field() -> Field {
    Field::Real
}

fn default_mode() -> String {
    "finite-atom".into()
}

impl From<&CascadeModel> for ModelFile {
    fn from(m: &CascadeModel) -> Self {
        let real = |x: &Matrix| {
            x.rows()
                .into_iter()
                .map(|r| r.into_iter().map(Entry::Real).collect())
                .collect()
        };
        let cplx = |x: &CMatrix| {
            x.rows()
                .into_iter()
                .map(|r| {
                    r.into_iter()
                        .map(|c| Entry::Complex([c.re, c.im]))
                        .collect()
                })
                .collect()
        };
        match &m.law {
            Law::Real(atoms) => ModelFile {
                p: m.p,
                field: Field::Real,
                mode: default_mode(),
                atoms: Some(
                    atoms
                        .iter()
                        .map(|a| AtomFile {
                            prob: a.prob,
                            matrices: a.matrices.iter().map(real).collect(),
                        })
                        .collect(),
                ),
                sampler: None,
            },
            Law::Complex(atoms) => ModelFile {
                p: m.p,
                field: Field::Complex,
                mode: default_mode(),
                atoms: Some(
                    atoms
                        .iter()
                        .map(|a| AtomFile {
                            prob: a.prob,
                            matrices: a.matrices.iter().map(cplx).collect(),
                        })
                        .collect(),
                ),
                sampler: None,
            },
            Law::Sampler(s) => {
                let mut params = serde_json::Map::new();
                let family = match s.family {
                    SamplerFamily::LogNormal { mu, sigma } => {
                        params.insert("mu".into(), mu.into());
                        params.insert("sigma".into(), sigma.into());
                        "lognormal"
                    }
                    SamplerFamily::Uniform { low, high } => {
                        params.insert("low".into(), low.into());
                        params.insert("high".into(), high.into());
                        "uniform"
                    }
                };
                params.insert("n".into(), s.n_children.into());
                params.insert("scale".into(), s.scale.into());
                ModelFile {
                    p: m.p,
                    field: Field::Real,
                    mode: "sampler".into(),
                    atoms: None,
                    sampler: Some(SamplerFile {
                        family: family.into(),
                        params,
                    }),
                }
            }
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<CascadeModel> {
        let p = self.p;
        match self.mode.as_str() {
            "finite-atom" => {
                let atoms = self
                    .atoms
                    .ok_or_else(|| Error::Parse("finite-atom model needs \"atoms\"".into()))?;
                match self.field {
                    Field::Real => {
                        let atoms = atoms
                            .into_iter()
                            .enumerate()
                            .map(|(a, at)| {
                                let matrices = at
                                    .matrices
                                    .into_iter()
                                    .enumerate()
                                    .map(|(k, rows)| parse_matrix(p, a, k, rows, |e| match e {
                                        Entry::Real(x) => Ok(x),
                                        Entry::Complex(_) => Err(Error::Parse(format!(
                                            "atom {a} matrix {k}: complex entry in a real-mode model"
                                        ))),
                                    }))
                                    .collect::<Result<Vec<_>>>()?;
                                Ok(Atom { prob: at.prob, matrices })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        CascadeModel::from_atoms(p, atoms)
                    }
                    Field::Complex => {
                        let atoms = atoms
                            .into_iter()
                            .enumerate()
                            .map(|(a, at)| {
                                let matrices = at
                                    .matrices
                                    .into_iter()
                                    .enumerate()
                                    .map(|(k, rows)| {
                                        parse_matrix(p, a, k, rows, |e| match e {
                                            Entry::Real(x) => Ok(Complex64::new(x, 0.0)),
                                            Entry::Complex([re, im]) => Ok(Complex64::new(re, im)),
                                        })
                                    })
                                    .collect::<Result<Vec<_>>>()?;
                                Ok(Atom {
                                    prob: at.prob,
                                    matrices,
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        CascadeModel::from_complex_atoms(p, atoms)
                    }
                }
            }
            "sampler" => {
                if self.field != Field::Real {
                    return Err(Error::Parse(
                        "sampler mode supports real weights only".into(),
                    ));
                }
                let s = self
                    .sampler
                    .ok_or_else(|| Error::Parse("sampler model needs \"sampler\"".into()))?;
                let get = |k: &str| -> Result<f64> {
                    s.params.get(k).and_then(|v| v.as_f64()).ok_or_else(|| {
                        Error::Parse(format!("sampler parameter \"{k}\" missing or not a number"))
                    })
                };
                let n_children = s.params.get("n").and_then(|v| v.as_u64()).ok_or_else(|| {
                    Error::Parse("sampler parameter \"n\" missing or not an integer".into())
                })? as usize;
                let scale = s
                    .params
                    .get("scale")
                    .and_then(|v| v.as_f64())
                    .unwrap_or(1.0);
                let family = match s.family.as_str() {
                    "lognormal" => SamplerFamily::LogNormal {
                        mu: get("mu")?,
                        sigma: get("sigma")?,
                    },
                    "uniform" => SamplerFamily::Uniform {
                        low: get("low")?,
                        high: get("high")?,
                    },
                    other => {
                        return Err(Error::Parse(format!("unknown sampler family \"{other}\"")))
                    }
                };
                CascadeModel::from_sampler(
                    p,
                    SamplerSpec {
                        family,
                        n_children,
                        scale,
                    },
                )
            }
            other => Err(Error::Parse(format!("unknown mode \"{other}\""))),
        }
    }
}

fn parse_matrix<T: Scalar>(
    p: usize,
    atom: usize,
    k: usize,
    rows: Vec<Vec<Entry>>,
    conv: impl Fn(Entry) -> Result<T>,
) -> Result<Matrix<T>> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension(format!(
            "atom {atom} matrix {k} is not {p}×{p}"
        )));
    }
    let rows = rows
        .into_iter()
        .map(|r| r.into_iter().map(&conv).collect::<Result<Vec<T>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Matrix::from_rows(&rows).expect("shape checked"))
}
