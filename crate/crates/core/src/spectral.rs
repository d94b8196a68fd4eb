//! Perron-Frobenius data, tilted moment matrices `M(t)` and the exact
//! n-generation moment matrices `M_n(t)`.
//!
//! `M_n(t)` is computed from the intensity measure of path products
//! `B ↦ E Σ_{u∈T_n} 1{X_u ∈ B}`, which for a finite-atom law is a finite
//! weighted list of matrices obtained by repeated matrix-product
//! convolution of the one-generation measure.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{primitivity_exponent, Matrix};
use crate::model::{Atom, CascadeModel};

pub const POWER_TOLERANCE: f64 = 1e-13;
pub const POWER_MAX_ITER: usize = 100_000;
/// Default cap on the number of matrices an intensity measure may hold.
pub const DEFAULT_SUPPORT_CAP: usize = 1_000_000;

/// Maximal eigenvalue with positive left/right eigenvectors, normalized so
/// that `Σ U_i = 1` and `Σ U_i V_i = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerronTriple {
    pub rho: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `‖U·M − ρU‖_∞`
    pub left_residual: f64,
    /// `‖M·V − ρV‖_∞`
    pub right_residual: f64,
}

/// Power iteration from the all-ones vector, on `M` and on `Mᵀ`.
pub fn perron(m: &Matrix) -> Result<PerronTriple> {
    if !m.all_finite() {
        return Err(Error::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    if !m.is_nonnegative() {
        return Err(Error::InvalidArgument("matrix has negative entries".into()));
    }
    if primitivity_exponent(m).is_none() {
        return Err(Error::NotPrimitive);
    }
    let (rho, mut v) = power_iterate(m)?;
    let (_, mut u) = power_iterate(&m.transpose())?;

    let su: f64 = u.iter().sum();
    u.iter_mut().for_each(|x| *x /= su);
    let uv: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    v.iter_mut().for_each(|x| *x /= uv);

    let um = m.vec_mul(&u);
    let mv = m.mul_vec(&v);
    let left_residual = um
        .iter()
        .zip(&u)
        .map(|(a, b)| (a - rho * b).abs())
        .fold(0.0, f64::max);
    let right_residual = mv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - rho * b).abs())
        .fold(0.0, f64::max);
    Ok(PerronTriple {
        rho,
        u,
        v,
        left_residual,
        right_residual,
    })
}

fn power_iterate(m: &Matrix) -> Result<(f64, Vec<f64>)> {
    let p = m.dim();
    let mut x = vec![1.0 / p as f64; p];
    let mut change = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        let y = m.mul_vec(&x);
        let s: f64 = y.iter().sum();
        if s == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let y: Vec<f64> = y.into_iter().map(|e| e / s).collect();
        change = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = y;
        if change < POWER_TOLERANCE {
            // `x` sums to one, so ‖Mx‖₁ is the eigenvalue.
            let rho = m.mul_vec(&x).iter().sum();
            return Ok((rho, x));
        }
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITER,
        change,
    })
}

/// `M(t) = E Σ_k A_k^{(t)}` with `(A^{(t)})_{ij} = a_ij^t`. Complex models use moduli.
pub fn moment_matrix(model: &CascadeModel, t: f64) -> Result<Matrix> {
    let atoms = model.hat_atoms()?;
    let p = model.p();
    let mut out = Matrix::zeros(p);
    for atom in &atoms {
        for a in &atom.matrices {
            let at = a
                .entry_pow(t)
                .map_err(|(row, col)| Error::ZeroPower { t, row, col })?;
            out.add_scaled(&at, atom.prob);
        }
    }
    Ok(out)
}

/// Expected occupation measure of the depth-n path products.
#[derive(Clone, Debug)]
pub struct IntensityMeasure {
    pub depth: usize,
    pub support: Vec<(f64, Matrix)>,
}

impl IntensityMeasure {
    pub fn total_weight(&self) -> f64 {
        self.support.iter().map(|(w, _)| w).sum()
    }

    /// `Σ weight · f(matrix)` entrywise.
    pub fn integrate(&self, f: impl Fn(&Matrix) -> Result<Matrix>) -> Result<Matrix> {
        let p = self.support.first().map(|(_, m)| m.dim()).unwrap_or(0);
        let mut out = Matrix::zeros(p);
        for (w, m) in &self.support {
            out.add_scaled(&f(m)?, *w);
        }
        Ok(out)
    }
}

pub fn intensity_measure(model: &CascadeModel, n: usize) -> Result<IntensityMeasure> {
    intensity_measure_capped(model, n, DEFAULT_SUPPORT_CAP)
}

pub fn intensity_measure_capped(
    model: &CascadeModel,
    n: usize,
    cap: usize,
) -> Result<IntensityMeasure> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "intensity depth must be at least 1".into(),
        ));
    }
    let atoms = model.hat_atoms()?;
    let branches: usize = atoms.iter().map(Atom::n_children).sum();
    let projected = (branches as f64).powi(n as i32);
    if projected > cap as f64 {
        return Err(Error::SupportCap { projected, cap });
    }
    let first = merge(
        atoms
            .iter()
            .flat_map(|a| a.matrices.iter().map(move |m| (a.prob, m.clone()))),
    );
    let mut current = first.clone();
    for _ in 1..n {
        // Root generation on the left: weight w₁w₂, matrix A·X.
        let chunks: Vec<Vec<(f64, Matrix)>> = first
            .par_iter()
            .map(|(w1, a)| {
                current
                    .iter()
                    .map(|(w2, x)| (w1 * w2, a.matmul(x)))
                    .collect()
            })
            .collect();
        current = merge(chunks.into_iter().flatten());
    }
    Ok(IntensityMeasure {
        depth: n,
        support: current,
    })
}

/// Merges bitwise-identical matrices, keeping first-seen order.
fn merge(items: impl Iterator<Item = (f64, Matrix)>) -> Vec<(f64, Matrix)> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut out: Vec<(f64, Matrix)> = Vec::new();
    for (w, m) in items {
        if w == 0.0 {
            continue;
        }
        match index.entry(m.bit_key()) {
            std::collections::hash_map::Entry::Occupied(e) => out[*e.get()].0 += w,
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(out.len());
                out.push((w, m));
            }
        }
    }
    out
}

/// `(M_n(t))_{ij} = E Σ_{u∈T_n} [(X_u)_{ij}]^t`. For `n = 1` this is `moment_matrix`.
pub fn n_step_moment_matrix(model: &CascadeModel, t: f64, n: usize) -> Result<Matrix> {
    if n == 1 {
        return moment_matrix(model, t);
    }
    let nu = intensity_measure(model, n)?;
    let p = model.p();
    let out = nu.integrate(|m| {
        m.entry_pow(t)
            .map_err(|(row, col)| Error::ZeroPower { t, row, col })
    })?;
    Ok(if nu.support.is_empty() {
        Matrix::zeros(p)
    } else {
        out
    })
}

/// `ρ(t)`, the Perron root of `M(t)`.
pub fn rho(model: &CascadeModel, t: f64) -> Result<f64> {
    Ok(perron(&moment_matrix(model, t)?)?.rho)
}

/// `ρ_n(t)`, the Perron root of `M_n(t)`.
pub fn rho_n(model: &CascadeModel, t: f64, n: usize) -> Result<f64> {
    Ok(perron(&n_step_moment_matrix(model, t, n)?)?.rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;

    #[test]
    fn perron_examples() {
        let t = perron(&mat(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        assert!((t.rho - 1.0).abs() < 1e-14);
        assert!(t.v.iter().all(|x| (x - 1.0).abs() < 1e-13));
        assert!(t.u.iter().all(|x| (x - 0.5).abs() < 1e-13));

        // [[a,a],[b,b]] has eigenvalues a+b and 0.
        let t = perron(&mat(&[&[0.13, 0.13], &[0.17, 0.17]])).unwrap();
        assert!((t.rho - 0.30).abs() < 1e-14);

        let t = perron(&mat(&[&[1.0]])).unwrap();
        assert_eq!(
            (t.rho, t.u.clone(), t.v.clone()),
            (1.0, vec![1.0], vec![1.0])
        );
    }

    #[test]
    fn perron_rejects_bad_input() {
        assert!(matches!(
            perron(&mat(&[&[0.0, 1.0], &[1.0, 0.0]])),
            Err(Error::NotPrimitive)
        ));
        assert!(perron(&mat(&[&[-1.0]])).is_err());
    }

    #[test]
    fn perron_normalization_and_residuals() {
        let m = mat(&[&[0.2, 0.7, 0.0], &[0.0, 0.1, 0.9], &[0.6, 0.0, 0.3]]);
        let t = perron(&m).unwrap();
        assert!((t.u.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((t.u.iter().zip(&t.v).map(|(a, b)| a * b).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.left_residual <= 1e-10 && t.right_residual <= 1e-10);
    }

    #[test]
    fn moment_matrix_examples() {
        assert_eq!(moment_matrix(&model_a(), 2.0).unwrap(), mat(&[&[0.5]]));
        let m2 = moment_matrix(&model_c(), 2.0).unwrap();
        assert!(m2.max_abs_diff(&mat(&[&[0.13, 0.13], &[0.17, 0.17]])) < 1e-15);
        assert_eq!(
            moment_matrix(&model_c(), 1.0).unwrap(),
            model_c().mean_matrix().0
        );
    }

    #[test]
    fn moment_matrix_zero_entry_negative_power() {
        let err = moment_matrix(&model_b().scaled(1.0), -1.0);
        assert!(err.is_ok(), "model B has no zero entries");
        let m = CascadeModel::from_atoms(
            2,
            vec![Atom {
                prob: 1.0,
                matrices: vec![mat(&[&[0.0, 1.0], &[1.0, 1.0]])],
            }],
        )
        .unwrap();
        assert!(matches!(
            moment_matrix(&m, -0.5),
            Err(Error::ZeroPower { .. })
        ));
        assert!(matches!(
            moment_matrix(&m, 0.0),
            Err(Error::ZeroPower { .. })
        ));
    }

    #[test]
    fn intensity_examples() {
        let nu = intensity_measure(&model_a(), 2).unwrap();
        assert_eq!(nu.support.len(), 1);
        assert_eq!(nu.support[0].0, 4.0);
        assert_eq!(nu.support[0].1, mat(&[&[0.25]]));

        let nu = intensity_measure(&model_b(), 3).unwrap();
        assert_eq!(nu.support.len(), 1);
        assert_eq!(nu.support[0].0, 1.0);
        assert_eq!(nu.support[0].1, mat(&[&[0.5, 0.5], &[0.5, 0.5]]));

        let (a1, a2) = model_c_matrices();
        let nu = intensity_measure(&model_c(), 2).unwrap();
        assert_eq!(nu.support.len(), 4);
        for expected in [
            a1.matmul(&a1),
            a1.matmul(&a2),
            a2.matmul(&a1),
            a2.matmul(&a2),
        ] {
            let hit = nu
                .support
                .iter()
                .find(|(_, m)| *m == expected)
                .expect("product present");
            assert_eq!(hit.0, 1.0);
        }
    }

    #[test]
    fn support_cap() {
        assert!(matches!(
            intensity_measure_capped(&model_c(), 10, 1000),
            Err(Error::SupportCap { .. })
        ));
    }

    #[test]
    fn n_step_examples() {
        let m = n_step_moment_matrix(&model_a(), 2.0, 2).unwrap();
        assert_eq!(m, mat(&[&[0.25]]));
        assert!(
            (rho_n(&model_a(), 2.0, 2).unwrap() - rho(&model_a(), 2.0).unwrap().powi(2)).abs()
                < 1e-15
        );
        assert_eq!(
            n_step_moment_matrix(&model_c(), 2.0, 1).unwrap(),
            moment_matrix(&model_c(), 2.0).unwrap()
        );
    }
}
