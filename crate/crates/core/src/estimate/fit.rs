use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fits with `r2` below this are flagged as misfits.
pub const FIT_R2_THRESHOLD: f64 = 0.98;
const MIN_POINTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayKind {
    /// `log φ̂ = c − λ log ‖t‖`.
    Power,
    /// `log(−log φ̂) = c + γ log ‖t‖`.
    StretchedExponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub kind: DecayKind,
    /// `λ̂` (power) or `γ̂` (stretched exponential).
    pub exponent: f64,
    pub intercept: f64,
    /// `(‖t‖, φ̂)` points inside the window, increasing in `‖t‖`.
    pub grid: Vec<(f64, f64)>,
    pub r2: f64,
    /// `φ̂`-range regressed.
    pub window: (f64, f64),
    pub poor_fit: bool,
}

impl DecayFit {
    /// Plot-ready columns: `log ‖t‖` and the regressed ordinate.
    pub fn plot_columns(&self) -> String {
        let mut out = match self.kind {
            DecayKind::Power => String::from("log_t,log_phi\n"),
            DecayKind::StretchedExponential => String::from("log_t,log_neg_log_phi\n"),
        };
        for &(t, phi) in &self.grid {
            out.push_str(&format!("{:?},{:?}\n", t.ln(), ordinate(self.kind, phi)));
        }
        out
    }

    pub const CSV_HEADER: &'static str =
        "kind,exponent,intercept,r2,window_low,window_high,points,poor_fit";

    pub fn csv_row(&self) -> String {
        let kind = match self.kind {
            DecayKind::Power => "power",
            DecayKind::StretchedExponential => "stretched-exponential",
        };
        format!(
            "{kind},{:?},{:?},{:?},{:?},{:?},{},{}",
            self.exponent,
            self.intercept,
            self.r2,
            self.window.0,
            self.window.1,
            self.grid.len(),
            self.poor_fit
        )
    }
}

fn ordinate(kind: DecayKind, phi: f64) -> f64 {
    match kind {
        DecayKind::Power => phi.ln(),
        DecayKind::StretchedExponential => (-phi.ln()).ln(),
    }
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, r2)`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    (a, b, r2)
}

fn fit(
    curve: &[(f64, f64)],
    replicates: usize,
    kind: DecayKind,
    floor: f64,
    ceiling: f64,
) -> Result<DecayFit> {
    if curve.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidArgument(
            "decay grid must be strictly increasing in |t|".into(),
        ));
    }
    let lo = (10.0 / replicates.max(1) as f64).max(floor);
    let window = (lo, ceiling);
    let grid: Vec<(f64, f64)> = curve
        .iter()
        .copied()
        .filter(|&(t, phi)| t > 0.0 && phi >= lo && phi <= ceiling)
        .collect();
    if grid.iter().any(|&(_, phi)| phi >= 1.0) {
        return Err(Error::Estimate(
            "phi >= 1 inside the regression window".into(),
        ));
    }
    if grid.len() < MIN_POINTS {
        return Err(Error::Estimate(format!(
            "only {} grid point(s) inside the window [{lo:e}, {ceiling}]; need {MIN_POINTS}",
            grid.len()
        )));
    }
    let xs: Vec<f64> = grid.iter().map(|&(t, _)| t.ln()).collect();
    let ys: Vec<f64> = grid.iter().map(|&(_, phi)| ordinate(kind, phi)).collect();
    let (a, b, r2) = linear_fit(&xs, &ys);
    let exponent = match kind {
        DecayKind::Power => -b,
        DecayKind::StretchedExponential => b,
    };
    if !exponent.is_finite() {
        return Err(Error::Estimate("non-finite fitted exponent".into()));
    }
    Ok(DecayFit {
        kind,
        exponent,
        intercept: a,
        grid,
        r2,
        window,
        poor_fit: r2 < FIT_R2_THRESHOLD,
    })
}

/// Power-law fit of `φ̂` inside `[max(10/R, 1e-4), 0.5]`.
pub fn fit_power_decay(curve: &[(f64, f64)], replicates: usize) -> Result<DecayFit> {
    fit(curve, replicates, DecayKind::Power, 1e-4, 0.5)
}

/// Stretched-exponential fit of `φ̂` inside `[max(10/R, 1e-5), 0.2]`.
pub fn fit_stretched_exponential(curve: &[(f64, f64)], replicates: usize) -> Result<DecayFit> {
    fit(
        curve,
        replicates,
        DecayKind::StretchedExponential,
        1e-5,
        0.2,
    )
}
