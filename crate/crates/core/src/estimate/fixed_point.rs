//! Distributional check of `Z =d Σ_k A_k Z(k)` at finite depth: `Y_n` is
//! compared with `Σ_k A_k Y_n(k)`, where the root weights are drawn once and
//! the `Y_n(k)` come from independent subtrees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dot, geometric_grid, ks_two_sample, mean_and_stderr, shifted_mean, KsResult};
use crate::engine::{Caps, DrawOffspring, Simulator};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{CascadeModel, Law};
use crate::rng::{replicate_key, split};

const LAPLACE_POINTS: usize = 12;
const SAMPLER_ROOT_DRAWS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPointVariant {
    Correct,
    /// Deliberate corruption: the root weights are replaced by the identity.
    SkipRootWeights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionKs {
    pub y: Vec<f64>,
    pub ks: KsResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub variant: FixedPointVariant,
    /// Projections `e_1, …, e_p, (1, …, 1)`.
    pub projections: Vec<ProjectionKs>,
    pub min_p_value: f64,
    /// `sup_s |φ̂(s·1) − Ê Π_k φ̂(s·1·A_k)|` with `φ̂` from the direct batch.
    pub laplace_residual: f64,
    pub laplace_s_grid: Vec<f64>,
    pub cap_breaches: usize,
}

/// `Σ_k A_k Y_{m−1}(k)` with the root drawn from `key` and subtree `k` grown
/// from `split(key, k + 1)`; with aligned keys this reproduces the direct
/// `Y_m` up to summation order. `None` if a subtree hits the cap.
pub fn two_stage_draw(
    sim: &Simulator<f64>,
    key: u64,
    m: usize,
    variant: FixedPointVariant,
) -> Option<Vec<f64>> {
    assert!(m >= 1, "two-stage draw needs at least one generation");
    let p = sim.p();
    let mut scratch = Vec::new();
    sim.with_offspring(key, &mut scratch, |children| {
        let mut out = vec![0.0; p];
        for (k, a) in children.iter().enumerate() {
            let sub = sim.run_from_key(split(key, k as u64 + 1), m - 1);
            if !sub.is_complete() {
                return None;
            }
            let y = sub.last();
            let contribution = match variant {
                FixedPointVariant::Correct => a.mul_vec(y),
                FixedPointVariant::SkipRootWeights => y.to_vec(),
            };
            for (o, c) in out.iter_mut().zip(contribution) {
                *o += c;
            }
        }
        Some(out)
    })
}

fn laplace_at(rows: &[Vec<f64>], t: &[f64]) -> f64 {
    shifted_mean(rows.iter().map(|r| (-dot(t, r)).exp()), rows.len())
}

/// Draws `R` copies of `Y_n` and `R` copies of `Σ_k A_k Y_n(k)` from
/// independent streams and compares them by two-sample KS on each projection.
pub fn fixed_point_check(
    model: &CascadeModel,
    n: usize,
    replicates: usize,
    master_seed: u64,
    caps: Caps,
    variant: FixedPointVariant,
) -> Result<FixedPointReport> {
    if replicates < 2 {
        return Err(Error::InvalidArgument(
            "fixed-point check needs at least 2 replicates".into(),
        ));
    }
    let sim = Simulator::new(model)?.with_caps(caps);
    let p = model.p();

    let draws: Vec<(Option<Vec<f64>>, Option<Vec<f64>>)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let key = replicate_key(master_seed, r);
            let direct = sim.run_from_key(key, n);
            let direct = direct.is_complete().then(|| direct.last().to_vec());
            (direct, two_stage_draw(&sim, split(key, 0), n + 1, variant))
        })
        .collect();
    let cap_breaches = draws
        .iter()
        .filter(|(a, b)| a.is_none() || b.is_none())
        .count();
    let b1: Vec<Vec<f64>> = draws.iter().filter_map(|(a, _)| a.clone()).collect();
    let b2: Vec<Vec<f64>> = draws.iter().filter_map(|(_, b)| b.clone()).collect();
    if b1.is_empty() || b2.is_empty() {
        return Err(Error::Estimate(
            "every replicate exceeded the population cap".into(),
        ));
    }

    let mut ys: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    if p > 1 {
        ys.push(vec![1.0; p]);
    }
    let projections: Vec<ProjectionKs> = ys
        .into_iter()
        .map(|y| {
            let a: Vec<f64> = b1.iter().map(|r| dot(&y, r)).collect();
            let b: Vec<f64> = b2.iter().map(|r| dot(&y, r)).collect();
            ProjectionKs {
                ks: ks_two_sample(&a, &b),
                y,
            }
        })
        .collect();
    let min_p_value = projections
        .iter()
        .map(|pk| pk.ks.p_value)
        .fold(f64::INFINITY, f64::min);

    // Root configurations with weights for Ê Π_k φ̂(t A_k).
    let roots: Vec<(f64, Vec<Matrix>)> = match model.law() {
        Law::Real(atoms) => atoms.iter().map(|a| (a.prob, a.matrices.clone())).collect(),
        _ => {
            let k = replicates.min(SAMPLER_ROOT_DRAWS);
            let mut scratch = Vec::new();
            (0..k as u64)
                .map(|r| {
                    let key = split(replicate_key(master_seed, r), 0);
                    sim.with_offspring(key, &mut scratch, |c| (1.0 / k as f64, c.to_vec()))
                })
                .collect()
        }
    };
    let ones = vec![1.0; p];
    let scale = mean_and_stderr(&b1.iter().map(|r| dot(&ones, r)).collect::<Vec<_>>())
        .map(|(m, _)| m)
        .unwrap_or(1.0);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let s_grid = geometric_grid(0.1 / scale, 10.0 / scale, LAPLACE_POINTS);
    let laplace_residual = s_grid
        .par_iter()
        .map(|&s| {
            let t = vec![s; p];
            let lhs = laplace_at(&b1, &t);
            let rhs: f64 = roots
                .iter()
                .map(|(w, mats)| {
                    w * mats
                        .iter()
                        .map(|a| {
                            let ta = match variant {
                                FixedPointVariant::Correct => a.vec_mul(&t),
                                FixedPointVariant::SkipRootWeights => t.clone(),
                            };
                            laplace_at(&b1, &ta)
                        })
                        .product::<f64>()
                })
                .sum();
            (lhs - rhs).abs()
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);

    Ok(FixedPointReport {
        n,
        replicates,
        master_seed,
        variant,
        projections,
        min_p_value,
        laplace_residual,
        laplace_s_grid: s_grid,
        cap_breaches,
    })
}
