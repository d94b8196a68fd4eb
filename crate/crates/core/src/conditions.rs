//! Exact evaluation of the moment, harmonic-moment, exponential-decay and
//! complex-weight conditions for finite-atom cascade models.
//!
//! Every function returns a [`ConditionReport`] holding the verdict and
//! every number it was derived from, keyed by stable names.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matrix::{primitivity_exponent, Matrix};
use crate::model::{validate_model, Atom, CascadeModel, Field};
use crate::spectral::{moment_matrix, n_step_moment_matrix, perron, rho, DEFAULT_SUPPORT_CAP};

/// Which result a report evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionId {
    /// Sufficient condition `p^{α−1} ρ_n(α) < 1` for `0 < E‖Y‖^α < ∞`,
    /// with the necessary side `ρ_n(α) ≤ 1` reported alongside.
    AlphaMoment,
    /// Harmonic moments and power decay of the Laplace transform.
    Harmonic,
    /// Stretched-exponential upper bound on the Laplace transform.
    ExponentialUpper,
    /// Stretched-exponential lower bound on the Laplace transform.
    ExponentialLower,
    /// `L^α` convergence with complex weights.
    ComplexAlphaMoment,
    /// α-moment of the MBRW additive martingale limit.
    MbrwAlphaMoment,
    /// Harmonic moment of the MBRW additive martingale limit.
    MbrwHarmonic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails,
    NotApplicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Violated,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub assumption: String,
    pub status: Status,
    pub detail: String,
}

/// Three-way answer to "is the α-moment of the limit finite and positive".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentConclusion {
    Finite,
    NotFinite,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conclusion: Option<MomentConclusion>,
    #[serde(serialize_with = "serialize_quantities")]
    pub quantities: BTreeMap<String, f64>,
    pub assumptions_checked: Vec<AssumptionCheck>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub alternate_verdicts: BTreeMap<String, Verdict>,
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub(crate) fn new(condition: ConditionId) -> Self {
        ConditionReport {
            condition,
            verdict: Verdict::NotApplicable,
            conclusion: None,
            quantities: BTreeMap::new(),
            assumptions_checked: Vec::new(),
            alternate_verdicts: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub(crate) fn q(&mut self, key: impl Into<String>, v: f64) {
        self.quantities.insert(key.into(), v);
    }

    pub(crate) fn assume(&mut self, assumption: &str, ok: bool, detail: impl Into<String>) -> bool {
        self.assumptions_checked.push(AssumptionCheck {
            assumption: assumption.into(),
            status: if ok { Status::Ok } else { Status::Violated },
            detail: detail.into(),
        });
        ok
    }

    pub fn all_assumptions_ok(&self) -> bool {
        self.assumptions_checked
            .iter()
            .all(|a| a.status == Status::Ok)
    }

    pub fn quantity(&self, key: &str) -> Option<f64> {
        self.quantities.get(key).copied()
    }
}

/// Non-finite quantities are written as the strings "inf", "-inf", "nan".
fn serialize_quantities<S: Serializer>(
    map: &BTreeMap<String, f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(map.len()))?;
    for (k, v) in map {
        if v.is_finite() {
            m.serialize_entry(k, v)?;
        } else {
            m.serialize_entry(k, &v.to_string())?;
        }
    }
    m.end()
}

fn positive_column_event(atom: &Atom) -> bool {
    atom.matrices.iter().all(Matrix::has_positive_column)
}

/// `P(∀k ≤ N: A_k has a column with all entries > 0)`. `N = 0` atoms count
/// as satisfying the event.
pub fn positive_column_probability(model: &CascadeModel) -> Result<f64> {
    let atoms = model.hat_atoms()?;
    Ok(atoms
        .iter()
        .filter(|a| positive_column_event(a))
        .map(|a| a.prob)
        .fold(0.0, |s, q| s + q))
}

/// `essinf N` over atoms carrying positive probability.
pub fn essinf_offspring(atoms: &[Atom]) -> usize {
    atoms
        .iter()
        .filter(|a| a.prob > 0.0)
        .map(Atom::n_children)
        .min()
        .unwrap_or(0)
}

fn assumption_h(report: &mut ConditionReport, model: &CascadeModel) -> bool {
    let v = validate_model(model);
    let detail = match &v.assumption_h {
        crate::model::AssumptionStatus::Holds => format!(
            "mean matrix primitive, |rho - 1| = {:e}",
            v.spectral_radius_deviation.unwrap_or(f64::NAN)
        ),
        crate::model::AssumptionStatus::Fails { reason } => reason.clone(),
    };
    report.assume(
        "mean matrix primitive with spectral radius 1",
        v.assumption_h.holds(),
        detail,
    )
}

/// α-moment check: computes `E‖Σ_k A_k‖^α` and `p^{α−1} ρ_n(α)` for `n = 1..=n_max`.
///
/// The verdict is `holds` iff some `p^{α−1} ρ_n(α) < 1`. The conclusion is
/// `not-finite` when some `ρ_n(α) > 1` (or `≥ 1` while the positive-column
/// probability is positive), and `undecided` in the remaining gap.
pub fn check_alpha_moment(
    model: &CascadeModel,
    alpha: f64,
    n_max: usize,
) -> Result<ConditionReport> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must exceed 1, got {alpha}"
        )));
    }
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let atoms = model.real_atoms()?;
    let branches: usize = atoms.iter().map(Atom::n_children).sum();
    let projected = (branches as f64).powi(n_max as i32);
    if projected > DEFAULT_SUPPORT_CAP as f64 {
        return Err(Error::SupportCap {
            projected,
            cap: DEFAULT_SUPPORT_CAP,
        });
    }
    let p = model.p() as f64;
    let mut r = ConditionReport::new(ConditionId::AlphaMoment);
    let h_ok = assumption_h(&mut r, model);

    let sum_norm: f64 = atoms
        .iter()
        .map(|a| {
            let mut s = Matrix::zeros(model.p());
            a.matrices.iter().for_each(|m| s.add_assign(m));
            a.prob * s.norm().powf(alpha)
        })
        .sum();
    r.q("E||sum_k A_k||^alpha", sum_norm);
    r.assume(
        "E||sum_k A_k||^alpha finite",
        sum_norm.is_finite(),
        format!("{sum_norm}"),
    );

    let pcp = positive_column_probability(model)?;
    r.q("positive_column_probability", pcp);
    r.q("p^(alpha-1)", p.powf(alpha - 1.0));

    let m_alpha = moment_matrix(model, alpha)?;
    if primitivity_exponent(&m_alpha).is_none() {
        r.assume(
            "M(alpha) primitive",
            false,
            "M(alpha) is not primitive; rho(alpha) undefined",
        );
        return Ok(r);
    }

    let mut first_hit = None;
    let mut necessary_fails = false;
    for n in 1..=n_max {
        let rho_n = perron(&n_step_moment_matrix(model, alpha, n)?)?.rho;
        let scaled = p.powf(alpha - 1.0) * rho_n;
        r.q(format!("rho_n(alpha)[n={n}]"), rho_n);
        r.q(format!("p^(alpha-1)*rho_n(alpha)[n={n}]"), scaled);
        if scaled < 1.0 && first_hit.is_none() {
            first_hit = Some(n);
        }
        if rho_n > 1.0 || (pcp > 0.0 && rho_n >= 1.0) {
            necessary_fails = true;
        }
    }
    r.q("rho(alpha)", r.quantities["rho_n(alpha)[n=1]"]);

    if !h_ok {
        r.verdict = Verdict::NotApplicable;
        r.notes
            .push("normalization assumption fails; numbers reported for reference only".into());
        return Ok(r);
    }
    match first_hit {
        Some(n) => {
            r.verdict = Verdict::Holds;
            r.q("first_n_satisfying", n as f64);
            r.conclusion = Some(MomentConclusion::Finite);
            r.notes.push(format!(
                "p^(alpha-1)*rho_n(alpha) < 1 at n = {n}: 0 < E||Y||^alpha < inf and E Y = V"
            ));
        }
        None => {
            r.verdict = Verdict::Fails;
            if necessary_fails {
                r.conclusion = Some(MomentConclusion::NotFinite);
                r.notes.push(
                    "necessary condition fails (rho_n(alpha) > 1, or >= 1 with a positive column): \
                     E||Y||^alpha is infinite or Y is degenerate"
                        .into(),
                );
            } else {
                r.conclusion = Some(MomentConclusion::Undecided);
                r.notes.push(format!(
                    "p^-(alpha-1) <= rho_n(alpha) <= 1 for all n <= {n_max}: sufficient condition not met, \
                     necessary condition not violated"
                ));
            }
        }
    }
    Ok(r)
}

/// Smallest row sum of `a`, i.e. `min_i Σ_j a_ij`.
fn min_row_sum(a: &Matrix) -> f64 {
    a.row_sums().into_iter().fold(f64::INFINITY, f64::min)
}

/// Harmonic-moment check built on the row sums of `A_1`.
pub fn check_harmonic(model: &CascadeModel, lambda: f64) -> Result<ConditionReport> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let atoms = model.hat_atoms()?;
    let mut r = ConditionReport::new(ConditionId::Harmonic);
    r.q("lambda", lambda);

    let pcp = positive_column_probability(model)?;
    let p0 = model.zero_offspring_probability();
    let p1: f64 = atoms
        .iter()
        .filter(|a| a.n_children() == 1)
        .map(|a| a.prob)
        .fold(0.0, |s, q| s + q);
    r.q("positive_column_probability", pcp);
    r.q("P(N=0)", p0);
    r.q("P(N=1)", p1);
    let a4 = r.assume(
        "positive column with positive probability",
        pcp > 0.0,
        format!("{pcp}"),
    );
    let a5 = r.assume(
        "P(N=0) = 0 and P(N=1) < 1",
        p0 == 0.0 && p1 < 1.0,
        format!("P(N=0) = {p0}, P(N=1) = {p1}"),
    );

    let m_min = essinf_offspring(&atoms);
    r.q("essinf_N", m_min as f64);
    if !(a4 && a5) {
        r.verdict = Verdict::NotApplicable;
        return Ok(r);
    }

    let neg_pow = |x: f64| {
        if x > 0.0 {
            x.powf(-lambda)
        } else {
            f64::INFINITY
        }
    };
    let mut first = 0.0;
    let mut single = 0.0;
    for a in &atoms {
        let v = neg_pow(min_row_sum(&a.matrices[0]));
        first += a.prob * v;
        if a.n_children() == 1 {
            single += a.prob * v;
        }
    }
    r.q("E(min_i rowsum A_1)^-lambda", first);
    r.q("E[(min_i rowsum A_1)^-lambda; N=1]", single);

    let holds = first.is_finite() && single < 1.0;
    r.verdict = if holds {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    if !first.is_finite() {
        r.notes
            .push("a zero row sum of A_1 carries positive probability".into());
    }
    let mut exponent = lambda;
    if m_min > 1 {
        let prod: f64 = atoms
            .iter()
            .map(|a| {
                a.prob
                    * a.matrices[..m_min]
                        .iter()
                        .map(|m| neg_pow(min_row_sum(m)))
                        .product::<f64>()
            })
            .sum();
        r.q("E prod_{k<=essinf N}(min_i rowsum A_k)^-lambda", prod);
        if holds && prod.is_finite() {
            exponent = m_min as f64 * lambda;
        }
    }
    if holds {
        r.q("laplace_decay_exponent", exponent);
        r.q("tail_exponent", exponent);
        r.q("harmonic_order_bound", exponent);
        r.notes.push(format!(
            "phi(t) = O(||t||^-{exponent}), P(y.Z <= x) = O(x^{exponent}), E(y.Z)^-s < inf for s < {exponent}"
        ));
    }
    Ok(r)
}

/// Both halves of the stretched-exponential decay check.
#[derive(Clone, Debug, Serialize)]
pub struct ExponentialProfile {
    pub upper: ConditionReport,
    pub lower: ConditionReport,
}

/// `γ = −log m̲ / log(a̲ p)` for the upper bound and `γ(ε)` with threshold
/// `ε* = 1/(p m̲) − a̲` for the lower bound.
pub fn exponential_profile(model: &CascadeModel, epsilon: f64) -> Result<ExponentialProfile> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let atoms = model.hat_atoms()?;
    let p = model.p() as f64;
    let m_min = essinf_offspring(&atoms);
    if m_min < 2 {
        return Err(Error::Assumption(format!(
            "essinf N = {m_min}; at least 2 required"
        )));
    }
    let a_min = atoms
        .iter()
        .flat_map(|a| a.matrices[..m_min].iter().map(Matrix::min_entry))
        .fold(f64::INFINITY, f64::min);
    if a_min <= 0.0 {
        return Err(Error::Assumption(
            "essential minimum entry is 0; the decay bounds need a positive floor".into(),
        ));
    }
    let pcp = positive_column_probability(model)?;
    let m = m_min as f64;
    let gamma = -m.ln() / (a_min * p).ln();
    let p_m: f64 = atoms
        .iter()
        .filter(|a| a.n_children() == m_min)
        .map(|a| a.prob)
        .fold(0.0, |s, q| s + q);

    let mut upper = ConditionReport::new(ConditionId::ExponentialUpper);
    upper.q("essinf_N", m);
    upper.q("a_min", a_min);
    upper.q("P(N=essinf N)", p_m);
    upper.q("gamma", gamma);
    upper.q("a_min*p*essinf_N", a_min * p * m);
    let ok4 = upper.assume(
        "positive column with positive probability",
        pcp > 0.0,
        format!("{pcp}"),
    );
    let ok_pm = upper.assume("P(N = essinf N) > 0", p_m > 0.0, format!("{p_m}"));
    upper.verdict = if !ok4 {
        Verdict::NotApplicable
    } else if ok_pm && gamma > 0.0 && gamma < 1.0 {
        Verdict::Holds
    } else {
        if !(gamma > 0.0 && gamma < 1.0) {
            upper.notes.push(format!(
                "gamma = {gamma} outside (0, 1): a_min*p*essinf_N = {} >= 1, the model is not normalized",
                a_min * p * m
            ));
        }
        Verdict::Fails
    };
    if upper.verdict == Verdict::Holds {
        upper
            .notes
            .push(format!("phi(t) <= exp(-C1 ||t||^{gamma}) for large ||t||"));
    }

    let mut lower = ConditionReport::new(ConditionId::ExponentialLower);
    let threshold = 1.0 / (p * m) - a_min;
    let level = (a_min + epsilon) * p * m;
    lower.q("epsilon", epsilon);
    lower.q("epsilon_threshold", threshold);
    lower.q("(a_min+epsilon)*p*essinf_N", level);
    let event: f64 = atoms
        .iter()
        .filter(|a| {
            a.n_children() == m_min
                && a.matrices[..m_min]
                    .iter()
                    .all(|x| x.max_entry() <= a_min + epsilon)
        })
        .map(|a| a.prob)
        .fold(0.0, |s, q| s + q);
    lower.q("P(N=essinf N, max entries <= a_min+epsilon)", event);
    if (a_min + epsilon) * p < 1.0 {
        lower.q("gamma(epsilon)", -m.ln() / ((a_min + epsilon) * p).ln());
    }
    lower.assume(
        "positive column with positive probability",
        ok4,
        format!("{pcp}"),
    );
    let ok_level = lower.assume(
        "(a_min+epsilon)*p*essinf_N < 1",
        level < 1.0,
        format!("{level}; feasible iff epsilon < {threshold}"),
    );
    let ok_event = lower.assume(
        "small-weight event has positive probability",
        event > 0.0,
        format!("{event}"),
    );
    lower.verdict = if ok4 && ok_level && ok_event {
        Verdict::Holds
    } else {
        Verdict::NotApplicable
    };
    if lower.verdict == Verdict::Holds {
        lower.notes.push(format!(
            "phi(t) >= exp(-C2 ||t||^{}) for large ||t||",
            lower.quantities["gamma(epsilon)"]
        ));
    }
    Ok(ExponentialProfile { upper, lower })
}

/// `L^α` check for complex weights via the absolute-value model.
///
/// Condition (ii) is evaluated twice: as `p^{α/β} ρ̂(β) < 1` (the verdict)
/// and as `p^{α/β} ρ̂(β)^{α/β} < 1` (recorded under `alternate_verdicts`).
pub fn check_complex(
    model: &CascadeModel,
    alpha: f64,
    beta_grid: &[f64],
) -> Result<ConditionReport> {
    if model.field() != Field::Complex {
        return Err(Error::WrongField {
            expected: "complex",
        });
    }
    if !(alpha > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must exceed 1, got {alpha}"
        )));
    }
    if alpha > 2.0 && beta_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "alpha > 2 needs a non-empty beta grid".into(),
        ));
    }
    if let Some(b) = beta_grid.iter().find(|&&b| !(b > 1.0 && b <= 2.0)) {
        return Err(Error::InvalidArgument(format!("beta {b} outside (1, 2]")));
    }
    let hat = model.hat()?;
    let (mean, _) = hat.mean_matrix();
    if primitivity_exponent(&mean).is_none() {
        return Err(Error::NotPrimitive);
    }
    let p = model.p() as f64;
    let mut r = ConditionReport::new(ConditionId::ComplexAlphaMoment);
    let hat_rho = perron(&mean)?.rho;
    r.q("rho_hat(1)", hat_rho);
    r.assume(
        "hat mean matrix primitive",
        true,
        format!("spectral radius of the absolute-value mean matrix = {hat_rho}"),
    );

    let sum_norm: f64 = hat
        .real_atoms()?
        .iter()
        .map(|a| {
            let mut s = Matrix::zeros(model.p());
            a.matrices.iter().for_each(|m| s.add_assign(m));
            a.prob * s.norm().powf(alpha)
        })
        .sum();
    r.q("E||sum_k |A_k| ||^alpha", sum_norm);
    let finite = r.assume(
        "E||sum_k |A_k| ||^alpha finite",
        sum_norm.is_finite(),
        format!("{sum_norm}"),
    );

    let rho_alpha = rho(&hat, alpha)?;
    let first = p.powf(alpha - 1.0) * rho_alpha;
    r.q("rho_hat(alpha)", rho_alpha);
    r.q("p^(alpha-1)*rho_hat(alpha)", first);

    let (stated, alternate) = if alpha <= 2.0 {
        let ok = first < 1.0;
        (ok, ok)
    } else {
        let mut stated = false;
        let mut alternate = false;
        for &b in beta_grid {
            let rb = rho(&hat, b)?;
            let s = p.powf(alpha / b) * rb;
            let l = p.powf(alpha / b) * rb.powf(alpha / b);
            r.q(format!("rho_hat(beta)[beta={b}]"), rb);
            r.q(format!("p^(alpha/beta)*rho_hat(beta)[beta={b}]"), s);
            r.q(
                format!("p^(alpha/beta)*rho_hat(beta)^(alpha/beta)[beta={b}]"),
                l,
            );
            stated |= first.max(s) < 1.0;
            alternate |= first.max(l) < 1.0;
        }
        (stated, alternate)
    };
    let to_verdict = |ok: bool| {
        if finite && ok {
            Verdict::Holds
        } else {
            Verdict::Fails
        }
    };
    r.verdict = to_verdict(stated);
    if alpha > 2.0 {
        r.alternate_verdicts.insert(
            "rho_hat(beta)^(alpha/beta) reading".into(),
            to_verdict(alternate),
        );
        if stated != alternate {
            r.notes
                .push("the two readings of the beta condition disagree".into());
        }
    }
    if r.verdict == Verdict::Holds {
        r.notes
            .push("sup_n E||Y_n||^alpha < inf; Y_n converges a.s. and in L^alpha".into());
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;

    #[test]
    fn alpha_moment_model_a() {
        let r = check_alpha_moment(&model_a(), 2.0, 2).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert_eq!(r.quantity("rho(alpha)"), Some(0.5));
        assert_eq!(r.quantity("p^(alpha-1)*rho_n(alpha)[n=1]"), Some(0.5));
        assert_eq!(r.quantity("first_n_satisfying"), Some(1.0));
        assert_eq!(r.conclusion, Some(MomentConclusion::Finite));
    }

    #[test]
    fn alpha_moment_model_c() {
        let r = check_alpha_moment(&model_c(), 2.0, 1).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!((r.quantity("rho(alpha)").unwrap() - 0.30).abs() < 1e-14);
        assert!((r.quantity("p^(alpha-1)*rho_n(alpha)[n=1]").unwrap() - 0.6).abs() < 1e-14);
    }

    #[test]
    fn alpha_moment_model_d2_necessary_fails() {
        let r = check_alpha_moment(&model_d2(), 2.0, 2).unwrap();
        // oracle: 2 (0.25·1.9² + 0.75·(1/30)²)
        let expected = 2.0 * (0.25 * 3.61 + 0.75 / 900.0);
        assert!((r.quantity("rho(alpha)").unwrap() - expected).abs() < 1e-13);
        assert!((expected - 1.806_666_666_666_666_6).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::Fails);
        assert_eq!(r.conclusion, Some(MomentConclusion::NotFinite));
    }

    #[test]
    fn alpha_moment_errors() {
        assert!(check_alpha_moment(&model_a(), 1.0, 1).is_err());
        assert!(check_alpha_moment(&model_a(), 2.0, 0).is_err());
        assert!(matches!(
            check_alpha_moment(&model_c(), 2.0, 40),
            Err(Error::SupportCap { .. })
        ));
        assert!(matches!(
            check_alpha_moment(&random_phase_model(), 2.0, 1),
            Err(Error::WrongField { .. })
        ));
    }

    #[test]
    fn positive_column_examples() {
        assert_eq!(positive_column_probability(&model_c()).unwrap(), 1.0);
        let m = CascadeModel::from_atoms(
            2,
            vec![Atom {
                prob: 1.0,
                matrices: vec![mat(&[&[1.0, 0.0], &[1.0, 0.0]])],
            }],
        )
        .unwrap();
        assert_eq!(positive_column_probability(&m).unwrap(), 1.0);
        let m = CascadeModel::from_atoms(
            2,
            vec![
                Atom {
                    prob: 0.5,
                    matrices: vec![mat(&[&[0.0, 1.0], &[1.0, 0.0]])],
                },
                Atom {
                    prob: 0.5,
                    matrices: vec![mat(&[&[0.5, 0.5], &[0.5, 0.5]])],
                },
            ],
        )
        .unwrap();
        assert_eq!(positive_column_probability(&m).unwrap(), 0.5);
    }

    #[test]
    fn harmonic_examples() {
        let r = check_harmonic(&model_c(), 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!((r.quantity("E(min_i rowsum A_1)^-lambda").unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(r.quantity("E[(min_i rowsum A_1)^-lambda; N=1]"), Some(0.0));
        assert_eq!(r.quantity("essinf_N"), Some(2.0));
        assert!(
            (r.quantity("E prod_{k<=essinf N}(min_i rowsum A_k)^-lambda")
                .unwrap()
                - 4.0)
                .abs()
                < 1e-13
        );
        assert_eq!(r.quantity("laplace_decay_exponent"), Some(2.0));

        let r = check_harmonic(&model_a(), 3.0).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert_eq!(r.quantity("E(min_i rowsum A_1)^-lambda"), Some(8.0));

        let single = CascadeModel::from_atoms(
            2,
            vec![Atom {
                prob: 1.0,
                matrices: vec![mat(&[&[0.4, 0.6], &[0.5, 0.5]])],
            }],
        )
        .unwrap();
        let r = check_harmonic(&single, 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::NotApplicable);
        assert!(!r.all_assumptions_ok());

        assert!(check_harmonic(&model_c(), 0.0).is_err());
    }

    #[test]
    fn harmonic_zero_row_sum_is_infinite() {
        let m = CascadeModel::from_atoms(
            2,
            vec![
                Atom {
                    prob: 0.5,
                    matrices: vec![
                        mat(&[&[1.0, 1.0], &[0.0, 0.0]]),
                        mat(&[&[0.5, 0.5], &[0.5, 0.5]]),
                    ],
                },
                Atom {
                    prob: 0.5,
                    matrices: vec![
                        mat(&[&[0.5, 0.5], &[0.5, 0.5]]),
                        mat(&[&[0.5, 0.5], &[0.5, 0.5]]),
                    ],
                },
            ],
        )
        .unwrap();
        let r = check_harmonic(&m, 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        assert_eq!(
            r.quantity("E(min_i rowsum A_1)^-lambda"),
            Some(f64::INFINITY)
        );
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"inf\""));
    }

    #[test]
    fn exponential_examples() {
        let prof = exponential_profile(&model_c(), 0.35).unwrap();
        let gamma = prof.upper.quantity("gamma").unwrap();
        assert!((gamma - 2f64.ln() / 5f64.ln()).abs() < 1e-12);
        assert!((gamma - 0.43068).abs() < 1e-5);
        assert_eq!(prof.upper.verdict, Verdict::Holds);
        assert!((prof.lower.quantity("(a_min+epsilon)*p*essinf_N").unwrap() - 1.8).abs() < 1e-12);
        assert_eq!(prof.lower.verdict, Verdict::NotApplicable);

        let prof = exponential_profile(&model_c(), 0.15).unwrap();
        assert!((prof.lower.quantity("epsilon_threshold").unwrap() - 0.15).abs() < 1e-12);
        assert_eq!(prof.lower.verdict, Verdict::NotApplicable);

        let prof = exponential_profile(&model_c().scaled(0.5), 0.1).unwrap();
        assert!((prof.upper.quantity("a_min").unwrap() - 0.05).abs() < 1e-15);
        assert!((prof.lower.quantity("(a_min+epsilon)*p*essinf_N").unwrap() - 0.6).abs() < 1e-12);
        let g = prof.lower.quantity("gamma(epsilon)").unwrap();
        assert!((g - (-(2f64.ln()) / 0.3f64.ln())).abs() < 1e-12);
        assert!((g - 0.5757).abs() < 1e-4);
    }

    #[test]
    fn exponential_errors() {
        assert!(matches!(
            exponential_profile(&model_b(), 0.1),
            Err(Error::Assumption(_))
        ));
        let zero = CascadeModel::from_atoms(
            2,
            vec![Atom {
                prob: 1.0,
                matrices: vec![
                    mat(&[&[0.5, 0.0], &[0.5, 0.5]]),
                    mat(&[&[0.5, 0.5], &[0.0, 0.5]]),
                ],
            }],
        )
        .unwrap();
        assert!(matches!(
            exponential_profile(&zero, 0.1),
            Err(Error::Assumption(_))
        ));
    }

    #[test]
    fn complex_examples() {
        let m = complex_phase_model(std::f64::consts::FRAC_PI_3);
        let r = check_complex(&m, 2.0, &[]).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!((r.quantity("rho_hat(alpha)").unwrap() - 0.5).abs() < 1e-15);

        let r = check_complex(&m, 4.0, &[1.5, 2.0]).unwrap();
        assert!((r.quantity("rho_hat(alpha)").unwrap() - 0.125).abs() < 1e-15);
        assert!((r.quantity("p^(alpha/beta)*rho_hat(beta)[beta=2]").unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.verdict, Verdict::Holds);

        assert!(matches!(
            check_complex(&model_a(), 2.0, &[]),
            Err(Error::WrongField { .. })
        ));
        assert!(check_complex(&m, 3.0, &[]).is_err());
    }

    #[test]
    fn reports_are_deterministic() {
        let a = check_alpha_moment(&model_d2(), 1.5, 3).unwrap();
        let b = check_alpha_moment(&model_d2(), 1.5, 3).unwrap();
        for (k, v) in &a.quantities {
            assert_eq!(v.to_bits(), b.quantities[k].to_bits());
        }
    }
}
