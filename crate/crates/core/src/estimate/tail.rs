use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::fit::linear_fit;
use crate::engine::SampleBatch;
use crate::error::{Error, Result};

const Z95: f64 = 1.959_963_984_540_054;
const SLOPE_LEVEL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub x: f64,
    /// Empirical `P(y·Y_n ≤ x)`.
    pub p_hat: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// `P̂ / x^λ`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub lambda: f64,
    pub replicates: usize,
    pub points: Vec<TailPoint>,
    /// OLS slope of `ratio` against `log x`.
    pub slope: f64,
    pub slope_stderr: f64,
    /// Two-sided p-value of the slope t-test.
    pub slope_p_value: f64,
    /// Ratio grows significantly as `x → 0` (negative slope at level 0.05).
    pub upward_drift: bool,
    /// `P̂ < 10/R` at the largest `x`.
    pub undersampled: bool,
}

impl TailCurve {
    pub const CSV_HEADER: &'static str = "x,p_hat,wilson_low,wilson_high,ratio";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for pt in &self.points {
            out.push_str(&format!(
                "{:?},{:?},{:?},{:?},{:?}\n",
                pt.x, pt.p_hat, pt.wilson_low, pt.wilson_high, pt.ratio
            ));
        }
        out
    }
}

fn wilson(successes: usize, n: usize) -> (f64, f64) {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if successes as f64 == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// Empirical lower-tail curve of `y·Y_n` with the boundedness diagnostic for `P̂/x^λ`.
pub fn tail_curve(
    batch: &SampleBatch,
    y: &[f64],
    x_grid: &[f64],
    lambda: f64,
) -> Result<TailCurve> {
    if x_grid.len() < 3
        || x_grid.iter().any(|&x| !(x > 0.0))
        || x_grid.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(Error::InvalidArgument(
            "x grid must hold at least 3 positive increasing values".into(),
        ));
    }
    let mut proj = batch.projections(y)?;
    if proj.is_empty() {
        return Err(Error::Estimate("no usable replicates".into()));
    }
    proj.sort_by(f64::total_cmp);
    let r = proj.len();
    let points: Vec<TailPoint> = x_grid
        .iter()
        .map(|&x| {
            let k = proj.partition_point(|&v| v <= x);
            let p_hat = k as f64 / r as f64;
            let (wilson_low, wilson_high) = wilson(k, r);
            TailPoint {
                x,
                p_hat,
                wilson_low,
                wilson_high,
                ratio: p_hat / x.powf(lambda),
            }
        })
        .collect();

    let xs: Vec<f64> = points.iter().map(|pt| pt.x.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|pt| pt.ratio).collect();
    let (a, b, _) = linear_fit(&xs, &ys);
    let m = xs.len();
    let mx = xs.iter().sum::<f64>() / m as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - a - b * x).powi(2))
        .sum();
    let se = (sse / (m - 2) as f64 / sxx).sqrt();
    let p_value = if se > 0.0 {
        let t = StudentsT::new(0.0, 1.0, (m - 2) as f64).expect("df > 0");
        2.0 * (1.0 - t.cdf((b / se).abs()))
    } else if b.abs() <= 1e-12 * ys.iter().fold(0.0f64, |s, y| s.max(y.abs())) {
        1.0
    } else {
        0.0
    };
    Ok(TailCurve {
        lambda,
        replicates: r,
        undersampled: points.last().expect("non-empty").p_hat < 10.0 / r as f64,
        points,
        slope: b,
        slope_stderr: se,
        slope_p_value: p_value,
        upward_drift: b < 0.0 && p_value < SLOPE_LEVEL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate_batch, Caps};
    use crate::fixtures::*;

    #[test]
    fn constant_sample() {
        let b = simulate_batch(&model_a(), 4, 50, 1, Caps::default()).unwrap();
        let c = tail_curve(&b, &[1.0], &[0.25, 0.5, 2.0], 1.0).unwrap();
        assert_eq!(c.points[1].p_hat, 0.0);
        assert_eq!(c.points[2].p_hat, 1.0);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson(30, 100);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson(0, 100).0, 0.0);
    }

    #[test]
    fn bad_grid() {
        let b = simulate_batch(&model_a(), 1, 5, 1, Caps::default()).unwrap();
        assert!(tail_curve(&b, &[1.0], &[1.0, 0.5, 2.0], 1.0).is_err());
    }
}
