//! Monte Carlo simulation of the weighted Galton-Watson tree.
//!
//! The tree is grown one generation at a time; only the path products
//! `X_u` of the current generation are kept. Each node `u` draws its
//! offspring configuration from a counter-based stream keyed by its label,
//! so a subtree's draws depend only on where it sits in the tree.

mod batch;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub(crate) use batch::write_file;
pub use batch::{
    read_batch_binary, read_batch_csv, BatchMeta, BatchValues, SampleBatch, BATCH_BIN, BATCH_CSV,
    BATCH_META, BINARY_MAGIC, BINARY_VERSION,
};

use crate::error::{Error, Result};
use crate::matrix::{mul_flat, Matrix, Scalar};
use crate::model::{validate_model, Atom, CascadeModel, Law, SamplerSpec};
use crate::rng::{replicate_key, split, CounterRng};
use crate::spectral::{moment_matrix, perron};

/// Default maximum number of nodes in a single generation.
pub const DEFAULT_POPULATION_CAP: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub population: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            population: DEFAULT_POPULATION_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReplicateStatus {
    Ok,
    /// `T_m = ∅` from `depth` on; `Y` is the zero vector there.
    Extinct {
        depth: usize,
    },
    /// Generation `depth` would exceed the population cap.
    CapExceeded {
        depth: usize,
    },
}

/// `Y_0, …, Y_m` for one tree, plus generation sizes.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    /// `values[m]` is `Y_m` (normalized by `ρ(t)^m` for tilted runs).
    pub values: Vec<Vec<T>>,
    /// Unnormalized sums `Σ_{u∈T_m} X_u^{(t)} V(t)`; equal to `values` for untilted runs.
    pub raw: Vec<Vec<T>>,
    pub node_counts: Vec<usize>,
    pub status: ReplicateStatus,
}

impl<T: Scalar> Trajectory<T> {
    /// Last computed `Y`. For a capped run this is the last complete depth.
    pub fn last(&self) -> &[T] {
        self.values.last().expect("trajectory holds Y_0")
    }

    pub fn is_complete(&self) -> bool {
        !matches!(self.status, ReplicateStatus::CapExceeded { .. })
    }
}

/// Source of offspring configurations `(N, A_1, …, A_N)`.
enum Offspring<T: Scalar> {
    Atoms {
        atoms: Vec<Atom<T>>,
        cumulative: Vec<f64>,
    },
    Sampler(SamplerSpec),
}

impl<T: Scalar> Offspring<T> {
    fn from_atoms(atoms: Vec<Atom<T>>) -> Self {
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.prob;
                acc
            })
            .collect();
        Offspring::Atoms { atoms, cumulative }
    }
}

fn pick_atom(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().expect("non-empty");
    let x = u * total;
    cumulative
        .partition_point(|&c| c <= x)
        .min(cumulative.len() - 1)
}

/// A cascade ready to simulate: offspring law, starting vector `V` and the
/// per-generation normalizer `ρ` (1 for the plain martingale).
pub struct Simulator<T: Scalar> {
    p: usize,
    offspring: Offspring<T>,
    v: Vec<T>,
    rho: f64,
    caps: Caps,
    model_id: String,
    tilt: Option<f64>,
}

/// Per-node offspring draw, shared by the engine and the two-stage sampler
/// used by [`crate::estimate::fixed_point_check`].
pub trait DrawOffspring<T: Scalar> {
    /// Calls `f` with the matrices `A_1, …, A_N` drawn by the node whose
    /// stream key is `key`.
    fn with_offspring<R>(
        &self,
        key: u64,
        scratch: &mut Vec<Matrix>,
        f: impl FnOnce(&[Matrix<T>]) -> R,
    ) -> R;
}

impl DrawOffspring<f64> for Simulator<f64> {
    fn with_offspring<R>(
        &self,
        key: u64,
        scratch: &mut Vec<Matrix>,
        f: impl FnOnce(&[Matrix]) -> R,
    ) -> R {
        let mut rng = CounterRng::new(key);
        match &self.offspring {
            Offspring::Atoms { atoms, cumulative } => {
                f(&atoms[pick_atom(cumulative, rng.uniform())].matrices)
            }
            Offspring::Sampler(spec) => {
                spec.draw_into(self.p, &mut rng, scratch);
                f(scratch)
            }
        }
    }
}

impl DrawOffspring<Complex64> for Simulator<Complex64> {
    fn with_offspring<R>(
        &self,
        key: u64,
        _scratch: &mut Vec<Matrix>,
        f: impl FnOnce(&[Matrix<Complex64>]) -> R,
    ) -> R {
        let mut rng = CounterRng::new(key);
        match &self.offspring {
            Offspring::Atoms { atoms, cumulative } => {
                f(&atoms[pick_atom(cumulative, rng.uniform())].matrices)
            }
            Offspring::Sampler(_) => unreachable!("complex sampler models are rejected at load"),
        }
    }
}

fn require_h(model: &CascadeModel) -> Result<Vec<f64>> {
    let report = validate_model(model);
    match (report.assumption_h, report.perron) {
        (crate::model::AssumptionStatus::Holds, Some(t)) => Ok(t.v),
        (crate::model::AssumptionStatus::Fails { reason }, _) => Err(Error::Assumption(reason)),
        _ => Err(Error::Assumption("Perron data unavailable".into())),
    }
}

impl Simulator<f64> {
    /// Plain martingale `Y_n = Σ X_u V`; requires the normalization assumption.
    pub fn new(model: &CascadeModel) -> Result<Self> {
        let v = require_h(model)?;
        Self::with_vector(model, v)
    }

    /// Runs the tree mechanics with an arbitrary starting vector and no
    /// normalization check (used for subcritical or unnormalized laws).
    pub fn with_vector(model: &CascadeModel, v: Vec<f64>) -> Result<Self> {
        if v.len() != model.p() {
            return Err(Error::Dimension(format!(
                "vector of length {} for p = {}",
                v.len(),
                model.p()
            )));
        }
        let offspring = match model.law() {
            Law::Real(atoms) => Offspring::from_atoms(atoms.clone()),
            Law::Sampler(spec) => Offspring::Sampler(spec.clone()),
            Law::Complex(_) => return Err(Error::WrongField { expected: "real" }),
        };
        Ok(Simulator {
            p: model.p(),
            offspring,
            v,
            rho: 1.0,
            caps: Caps::default(),
            model_id: model.model_id(),
            tilt: None,
        })
    }

    /// Tilted martingale with weights `A^{(t)}`, start `V(t)` and divisor `ρ(t)^n`.
    pub fn tilted(model: &CascadeModel, t: f64) -> Result<Self> {
        let atoms = model.real_atoms()?;
        let m_t = moment_matrix(model, t)?;
        let triple = perron(&m_t)?;
        let tilted: Vec<Atom> = atoms
            .iter()
            .map(|a| {
                a.matrices
                    .iter()
                    .map(|m| {
                        m.entry_pow(t)
                            .map_err(|(row, col)| Error::ZeroPower { t, row, col })
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(|matrices| Atom {
                        prob: a.prob,
                        matrices,
                    })
            })
            .collect::<Result<_>>()?;
        Ok(Simulator {
            p: model.p(),
            offspring: Offspring::from_atoms(tilted),
            v: triple.v,
            rho: triple.rho,
            caps: Caps::default(),
            model_id: model.model_id(),
            tilt: Some(t),
        })
    }
}

impl Simulator<Complex64> {
    /// Complex weights started from the eigenvector of the absolute-value mean matrix.
    pub fn complex(model: &CascadeModel) -> Result<Self> {
        let atoms = model.complex_atoms()?.to_vec();
        let v = require_h(&model.hat()?)?;
        Ok(Simulator {
            p: model.p(),
            offspring: Offspring::from_atoms(atoms),
            v: v.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
            rho: 1.0,
            caps: Caps::default(),
            model_id: model.model_id(),
            tilt: None,
        })
    }
}

impl<T: Scalar> Simulator<T>
where
    Simulator<T>: DrawOffspring<T>,
{
    pub fn with_caps(mut self, caps: Caps) -> Self {
        self.caps = caps;
        self
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn start_vector(&self) -> &[T] {
        &self.v
    }

    pub fn normalizer(&self) -> f64 {
        self.rho
    }

    /// Grows the tree rooted at stream `key` for `n` generations.
    pub fn run_from_key(&self, key: u64, n: usize) -> Trajectory<T> {
        let p = self.p;
        let pp = p * p;
        let mut keys = vec![key];
        let mut products: Vec<T> = Matrix::<T>::identity(p).as_slice().to_vec();
        let mut values = vec![self.v.clone()];
        let mut raw = vec![self.v.clone()];
        let mut node_counts = vec![1usize];
        let mut status = ReplicateStatus::Ok;
        let mut scratch = Vec::new();
        let mut next_keys = Vec::new();
        let mut next_products: Vec<T> = Vec::new();

        for depth in 1..=n {
            next_keys.clear();
            next_products.clear();
            let mut over_cap = false;
            for (idx, &k) in keys.iter().enumerate() {
                let x = &products[idx * pp..(idx + 1) * pp];
                self.with_offspring(k, &mut scratch, |children| {
                    for (c, a) in children.iter().enumerate() {
                        next_keys.push(split(k, c as u64 + 1));
                        let start = next_products.len();
                        next_products.resize(start + pp, T::zero());
                        mul_flat(x, a.as_slice(), &mut next_products[start..], p);
                    }
                });
                if next_keys.len() > self.caps.population {
                    over_cap = true;
                    break;
                }
            }
            if over_cap {
                status = ReplicateStatus::CapExceeded { depth };
                break;
            }
            std::mem::swap(&mut keys, &mut next_keys);
            std::mem::swap(&mut products, &mut next_products);
            node_counts.push(keys.len());

            let mut sum = vec![T::zero(); pp];
            for chunk in products.chunks_exact(pp) {
                for (s, &x) in sum.iter_mut().zip(chunk) {
                    *s += x;
                }
            }
            let y_raw = Matrix::from_flat(p, sum).mul_vec(&self.v);
            let y = if self.rho == 1.0 {
                y_raw.clone()
            } else {
                let d = T::from_real(self.rho.powi(depth as i32).recip());
                y_raw.iter().map(|&e| e * d).collect()
            };
            values.push(y);
            raw.push(y_raw);
            if keys.is_empty() && status == ReplicateStatus::Ok {
                status = ReplicateStatus::Extinct { depth };
            }
        }
        Trajectory {
            values,
            raw,
            node_counts,
            status,
        }
    }

    /// Replicate `r` of a batch with master seed `master_seed`.
    pub fn run_replicate(&self, master_seed: u64, r: u64, n: usize) -> Trajectory<T> {
        self.run_from_key(replicate_key(master_seed, r), n)
    }

    /// `R` independent replicates; row `r` depends only on `(master_seed, r)`.
    pub fn batch(&self, n: usize, replicates: usize, master_seed: u64) -> Result<SampleBatch>
    where
        BatchValues: From<Vec<Vec<T>>>,
    {
        if replicates == 0 {
            return Err(Error::InvalidArgument(
                "replicates must be at least 1".into(),
            ));
        }
        let runs: Vec<Trajectory<T>> = (0..replicates as u64)
            .into_par_iter()
            .map(|r| self.run_replicate(master_seed, r, n))
            .collect();
        let nan = T::from_real(f64::NAN);
        let mut values = Vec::with_capacity(replicates);
        let mut raw = Vec::with_capacity(replicates);
        let mut status = Vec::with_capacity(replicates);
        let mut node_counts = Vec::with_capacity(replicates);
        for t in runs {
            if t.is_complete() {
                values.push(t.values[n].clone());
                raw.push(t.raw[n].clone());
                node_counts.push(*t.node_counts.last().expect("non-empty"));
            } else {
                values.push(vec![nan; self.p]);
                raw.push(vec![nan; self.p]);
                node_counts.push(0);
            }
            status.push(t.status);
        }
        let seeds = (0..replicates as u64)
            .map(|r| replicate_key(master_seed, r))
            .collect();
        Ok(SampleBatch {
            model_id: self.model_id.clone(),
            p: self.p,
            n,
            master_seed,
            tilt: self.tilt,
            values: values.into(),
            raw_values: if self.rho == 1.0 {
                None
            } else {
                Some(raw.into())
            },
            status,
            node_counts,
            seeds,
        })
    }
}

/// `Y_n` for one tree under `seed` (the same tree as replicate 0 of a batch
/// with master seed `seed`).
pub fn simulate_yn(
    model: &CascadeModel,
    n: usize,
    seed: u64,
    caps: Caps,
) -> Result<Trajectory<f64>> {
    Ok(Simulator::new(model)?
        .with_caps(caps)
        .run_replicate(seed, 0, n))
}

pub fn simulate_batch(
    model: &CascadeModel,
    n: usize,
    replicates: usize,
    master_seed: u64,
    caps: Caps,
) -> Result<SampleBatch> {
    Simulator::new(model)?
        .with_caps(caps)
        .batch(n, replicates, master_seed)
}

/// Normalized tilted draw `Σ_{u∈T_n} X_u^{(t)} V(t) / ρ(t)^n`; the raw sum is in `raw`.
pub fn simulate_tilted(
    model: &CascadeModel,
    t: f64,
    n: usize,
    seed: u64,
    caps: Caps,
) -> Result<Trajectory<f64>> {
    Ok(Simulator::tilted(model, t)?
        .with_caps(caps)
        .run_replicate(seed, 0, n))
}

pub fn simulate_complex(
    model: &CascadeModel,
    n: usize,
    seed: u64,
    caps: Caps,
) -> Result<Trajectory<Complex64>> {
    Ok(Simulator::complex(model)?
        .with_caps(caps)
        .run_replicate(seed, 0, n))
}
