//! Estimators over [`SampleBatch`]es: moments, harmonic moments, the
//! empirical Laplace transform, decay fits, tail curves and the fixed-point
//! check. Everything targets `Y_n` at a finite `n`; limits are approached by
//! comparing several `n`.

mod fit;
mod fixed_point;
mod ks;
mod tail;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fit::{fit_power_decay, fit_stretched_exponential, DecayFit, DecayKind, FIT_R2_THRESHOLD};
pub use fixed_point::{
    fixed_point_check, two_stage_draw, FixedPointReport, FixedPointVariant, ProjectionKs,
};
pub use ks::{ks_two_sample, KsResult, KS_TIE_TOLERANCE};
pub use tail::{tail_curve, TailCurve, TailPoint};

use crate::engine::SampleBatch;
use crate::error::{Error, Result};

/// Fraction of the sample sum carried by the largest ten terms above which a
/// moment estimate is flagged as heavy-tailed.
pub const HEAVY_TAIL_SHARE: f64 = 0.5;
const HEAVY_TAIL_TOP: usize = 10;
const Z95: f64 = 1.959_963_984_540_054;
/// Relative slack applied when intersecting confidence intervals, so that
/// zero-width intervals of equal values computed along different routes still meet.
pub const CI_OVERLAP_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Target {
    Coordinate(usize),
    Norm,
    Projection(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    /// `α` for moments, `−λ` for harmonic moments.
    pub order: f64,
    pub target: Target,
    pub point: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub n: usize,
    pub replicates: usize,
    /// Replicates actually averaged.
    pub used: usize,
    pub heavy_tail: bool,
    pub infinite_excluded: usize,
    pub biased: bool,
    pub notes: Vec<String>,
}

impl MomentEstimate {
    pub const CSV_HEADER: &'static str = "order,target,n,replicates,used,point,stderr,ci_low,ci_high,heavy_tail,infinite_excluded,biased";

    pub fn csv_row(&self) -> String {
        let target = match &self.target {
            Target::Coordinate(i) => format!("coord{}", i + 1),
            Target::Norm => "norm".into(),
            Target::Projection(y) => format!(
                "proj[{}]",
                y.iter()
                    .map(|x| format!("{x:?}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
        };
        format!(
            "{:?},{target},{},{},{},{:?},{:?},{:?},{:?},{},{},{}",
            self.order,
            self.n,
            self.replicates,
            self.used,
            self.point,
            self.stderr,
            self.ci95.0,
            self.ci95.1,
            self.heavy_tail,
            self.infinite_excluded,
            self.biased
        )
    }

    fn from_sample(order: f64, target: Target, batch: &SampleBatch, terms: &[f64]) -> Result<Self> {
        let (point, stderr) =
            mean_and_stderr(terms).ok_or_else(|| Error::Estimate("no usable replicates".into()))?;
        Ok(MomentEstimate {
            order,
            target,
            point,
            stderr,
            ci95: (point - Z95 * stderr, point + Z95 * stderr),
            n: batch.n,
            replicates: batch.replicates(),
            used: terms.len(),
            heavy_tail: heavy_tail(terms),
            infinite_excluded: 0,
            biased: false,
            notes: Vec::new(),
        })
    }
}

/// Sample mean and standard error (sample variance, `R − 1` denominator).
pub fn mean_and_stderr(xs: &[f64]) -> Option<(f64, f64)> {
    let r = xs.len();
    if r == 0 {
        return None;
    }
    let mean = shifted_mean(xs.iter().copied(), r);
    if r == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    Some((mean, (var / r as f64).sqrt()))
}

fn heavy_tail(terms: &[f64]) -> bool {
    if terms.len() <= HEAVY_TAIL_TOP {
        return false;
    }
    let total: f64 = terms.iter().sum();
    if total <= 0.0 {
        return false;
    }
    let mut sorted = terms.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted[..HEAVY_TAIL_TOP].iter().sum::<f64>() > HEAVY_TAIL_SHARE * total
}

fn scalar_values(batch: &SampleBatch, target: &Target) -> Result<Vec<f64>> {
    let p = batch.p;
    if let Target::Coordinate(i) = target {
        if *i >= p {
            return Err(Error::Dimension(format!(
                "coordinate {} of a p = {p} batch",
                i + 1
            )));
        }
    }
    match batch.field() {
        crate::model::Field::Real => match target {
            Target::Coordinate(i) => Ok(batch.real_rows()?.iter().map(|r| r[*i]).collect()),
            Target::Norm => Ok(batch
                .real_rows()?
                .iter()
                .map(|r| r.iter().map(|x| x.abs()).sum())
                .collect()),
            Target::Projection(y) => batch.projections(y),
        },
        crate::model::Field::Complex => {
            let rows = batch.complex_rows()?;
            match target {
                Target::Coordinate(i) => Ok(rows.iter().map(|r| r[*i].norm()).collect()),
                Target::Norm => Ok(rows
                    .iter()
                    .map(|r| r.iter().map(|z| z.norm()).sum())
                    .collect()),
                Target::Projection(_) => Err(Error::Estimate(
                    "complex batches support only modulus targets (coordinate or norm)".into(),
                )),
            }
        }
    }
}

/// Sample mean of `g(Y_n)^α`; for complex batches `g` uses moduli.
pub fn estimate_moment(batch: &SampleBatch, alpha: f64, target: Target) -> Result<MomentEstimate> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "moment order must be positive, got {alpha}"
        )));
    }
    let terms: Vec<f64> = scalar_values(batch, &target)?
        .into_iter()
        .map(|g| g.powf(alpha))
        .collect();
    let mut est = MomentEstimate::from_sample(alpha, target, batch, &terms)?;
    if batch.cap_breaches() > 0 {
        est.notes.push(format!(
            "{} capped replicate(s) excluded",
            batch.cap_breaches()
        ));
    }
    Ok(est)
}

/// Sample mean of `(y·Y_n)^{−λ}` over replicates with a positive projection.
/// Zero projections (extinct trees included) are excluded and the estimate
/// is marked biased.
pub fn estimate_harmonic(batch: &SampleBatch, lambda: f64, y: &[f64]) -> Result<MomentEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if y.iter().any(|&c| c < 0.0) || y.iter().all(|&c| c == 0.0) {
        return Err(Error::InvalidArgument(
            "y must be nonnegative and nonzero".into(),
        ));
    }
    let proj = batch.projections(y)?;
    let terms: Vec<f64> = proj
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|x| x.powf(-lambda))
        .collect();
    let excluded = proj.len() - terms.len();
    let mut est =
        MomentEstimate::from_sample(-lambda, Target::Projection(y.to_vec()), batch, &terms)?;
    est.infinite_excluded = excluded;
    if excluded > 0 {
        est.biased = true;
        est.notes.push(format!(
            "{excluded} infinite term{} excluded",
            if excluded == 1 { "" } else { "s" }
        ));
        est.notes
            .push("estimate conditions on a positive projection and is biased downward".into());
    }
    Ok(est)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplacePoint {
    pub t: Vec<f64>,
    /// `‖t‖₁`.
    pub norm: f64,
    pub phi: f64,
}

/// `φ̂(t) = mean exp(−t·Y_n)` at every grid point, in grid order.
pub fn estimate_laplace(batch: &SampleBatch, t_grid: &[Vec<f64>]) -> Result<Vec<LaplacePoint>> {
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("empty Laplace grid".into()));
    }
    let rows = batch.real_rows()?;
    if rows.is_empty() {
        return Err(Error::Estimate("no usable replicates".into()));
    }
    for t in t_grid {
        if t.len() != batch.p || t.iter().any(|&c| !(c >= 0.0)) {
            return Err(Error::InvalidArgument(
                "Laplace grid points must be nonnegative vectors of length p".into(),
            ));
        }
    }
    Ok(t_grid
        .par_iter()
        .map(|t| {
            let phi = shifted_mean(rows.iter().map(|r| (-dot(t, r)).exp()), rows.len());
            LaplacePoint {
                t: t.clone(),
                norm: t.iter().sum(),
                phi,
            }
        })
        .collect())
}

/// Laplace transform along the ray `s·direction`.
pub fn laplace_ray(
    batch: &SampleBatch,
    direction: &[f64],
    s_grid: &[f64],
) -> Result<Vec<LaplacePoint>> {
    let grid: Vec<Vec<f64>> = s_grid
        .iter()
        .map(|&s| direction.iter().map(|d| s * d).collect())
        .collect();
    estimate_laplace(batch, &grid)
}

/// Indices `k` where `φ̂` increases from grid point `k` to `k + 1` along a ray.
pub fn monotonicity_violations(curve: &[LaplacePoint]) -> Vec<usize> {
    curve
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].phi > w[0].phi)
        .map(|(k, _)| k)
        .collect()
}

/// `(‖t‖, φ̂)` pairs for the fitting routines.
pub fn decay_curve(curve: &[LaplacePoint]) -> Vec<(f64, f64)> {
    curve.iter().map(|pt| (pt.norm, pt.phi)).collect()
}

pub fn laplace_csv(curve: &[LaplacePoint]) -> String {
    let mut out = String::from("t,norm,phi\n");
    for pt in curve {
        let t =
            pt.t.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(" ");
        out.push_str(&format!("{t},{:?},{:?}\n", pt.norm, pt.phi));
    }
    out
}

/// `s` values `lo·q^k` spanning `[lo, hi]` with `points` entries.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && points >= 2);
    let q = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|k| lo * (q * k as f64).exp()).collect()
}

/// Mean computed as `x_0 + Σ (x_i − x_0) / R`, exact for constant samples.
pub(crate) fn shifted_mean(mut xs: impl Iterator<Item = f64>, len: usize) -> f64 {
    let Some(x0) = xs.next() else { return f64::NAN };
    x0 + xs.map(|x| x - x0).sum::<f64>() / len as f64
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coordinatewise mean and standard error of a real batch.
pub fn batch_mean(batch: &SampleBatch) -> Result<Vec<(f64, f64)>> {
    let rows = batch.real_rows()?;
    (0..batch.p)
        .map(|i| {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            mean_and_stderr(&col).ok_or_else(|| Error::Estimate("no usable replicates".into()))
        })
        .collect()
}

/// Coordinatewise complex mean with separate real and imaginary standard errors.
pub fn complex_batch_mean(batch: &SampleBatch) -> Result<Vec<(Complex64, f64, f64)>> {
    let rows = batch.complex_rows()?;
    (0..batch.p)
        .map(|i| {
            let re: Vec<f64> = rows.iter().map(|r| r[i].re).collect();
            let im: Vec<f64> = rows.iter().map(|r| r[i].im).collect();
            let (mr, sr) = mean_and_stderr(&re)
                .ok_or_else(|| Error::Estimate("no usable replicates".into()))?;
            let (mi, si) = mean_and_stderr(&im).expect("same length");
            Ok((Complex64::new(mr, mi), sr, si))
        })
        .collect()
}

/// `|mean − target| ≤ k·SE + floor·|target|`; the floor only matters when the
/// sample is (numerically) constant.
pub fn within_standard_errors(mean: f64, stderr: f64, target: f64, k: f64, floor: f64) -> bool {
    (mean - target).abs() <= k * stderr + floor * target.abs().max(f64::MIN_POSITIVE)
}

/// Whether all confidence intervals share a common point.
pub fn cis_overlap(estimates: &[MomentEstimate]) -> bool {
    let lo = estimates
        .iter()
        .map(|e| e.ci95.0 - CI_OVERLAP_SLACK * e.point.abs())
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = estimates
        .iter()
        .map(|e| e.ci95.1 + CI_OVERLAP_SLACK * e.point.abs())
        .fold(f64::INFINITY, f64::min);
    lo <= hi
}
