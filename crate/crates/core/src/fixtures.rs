//! Reference models used by the test suites, the CLI `--builtin` flag and
//! the Python bindings.

use num_complex::Complex64;

use crate::matrix::{CMatrix, Matrix};
use crate::model::{Atom, CascadeModel};

/// Symmetric binary cascade: p = 1, N = 2, both weights 1/2.
pub const MODEL_A_JSON: &str = r#"{
  "p": 1,
  "field": "real",
  "mode": "finite-atom",
  "atoms": [{"prob": 1.0, "matrices": [[[0.5]], [[0.5]]]}]
}"#;

pub fn mat(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).expect("square rows")
}

pub fn model_a() -> CascadeModel {
    CascadeModel::from_atoms(
        1,
        vec![Atom {
            prob: 1.0,
            matrices: vec![mat(&[&[0.5]]), mat(&[&[0.5]])],
        }],
    )
    .expect("valid")
}

/// Single chain through the idempotent matrix `J/2`.
pub fn model_b() -> CascadeModel {
    CascadeModel::from_atoms(
        2,
        vec![Atom {
            prob: 1.0,
            matrices: vec![mat(&[&[0.5, 0.5], &[0.5, 0.5]])],
        }],
    )
    .expect("valid")
}

pub fn model_c_matrices() -> (Matrix, Matrix) {
    (
        mat(&[&[0.3, 0.2], &[0.1, 0.4]]),
        mat(&[&[0.2, 0.3], &[0.4, 0.1]]),
    )
}

/// p = 2, N = 2, deterministic weights summing to `J/2`.
pub fn model_c() -> CascadeModel {
    let (a1, a2) = model_c_matrices();
    CascadeModel::from_atoms(
        2,
        vec![Atom {
            prob: 1.0,
            matrices: vec![a1, a2],
        }],
    )
    .expect("valid")
}

/// p = 1, N = 2, i.i.d. weights: 1.9 w.p. 1/4, 1/30 w.p. 3/4 (mean 1/2).
pub fn model_d2() -> CascadeModel {
    iid_scalar_binary(&[(1.9, 0.25), (0.1 / 3.0, 0.75)])
}

/// p = 1, N = 2, i.i.d. weights: 0.2 or 0.8 with probability 1/2 each.
///
/// Same `γ = log 2 / log 5` exponent as MODEL-C but with a non-degenerate limit.
pub fn model_e() -> CascadeModel {
    iid_scalar_binary(&[(0.2, 0.5), (0.8, 0.5)])
}

/// p = 1, N = 2 with the two weights drawn i.i.d. from `values`.
pub fn iid_scalar_binary(values: &[(f64, f64)]) -> CascadeModel {
    let mut atoms = Vec::new();
    for &(a, pa) in values {
        for &(b, pb) in values {
            atoms.push(Atom {
                prob: pa * pb,
                matrices: vec![mat(&[&[a]]), mat(&[&[b]])],
            });
        }
    }
    CascadeModel::from_atoms(1, atoms).expect("valid")
}

/// p = 1, N = 2, deterministic weights `0.5·e^{iθ}`.
pub fn complex_phase_model(theta: f64) -> CascadeModel {
    let a = CMatrix::from_rows(&[vec![Complex64::from_polar(0.5, theta)]]).expect("1x1");
    CascadeModel::from_complex_atoms(
        1,
        vec![Atom {
            prob: 1.0,
            matrices: vec![a.clone(), a],
        }],
    )
    .expect("valid")
}

/// p = 1, N = 2, weights `0.5·e^{iΘ_k}` with Θ_k i.i.d. uniform on {0, π}.
pub fn random_phase_model() -> CascadeModel {
    random_phase_with(0.5, &[0.0, std::f64::consts::PI])
}

/// p = 1, N = 2, weights `r·e^{iΘ_k}` with Θ_k i.i.d. uniform on `phases`.
pub fn random_phase_with(r: f64, phases: &[f64]) -> CascadeModel {
    let q = 1.0 / (phases.len() * phases.len()) as f64;
    let mut atoms = Vec::new();
    for &a in phases {
        for &b in phases {
            let ma = CMatrix::from_rows(&[vec![Complex64::from_polar(r, a)]]).expect("1x1");
            let mb = CMatrix::from_rows(&[vec![Complex64::from_polar(r, b)]]).expect("1x1");
            atoms.push(Atom {
                prob: q,
                matrices: vec![ma, mb],
            });
        }
    }
    CascadeModel::from_complex_atoms(1, atoms).expect("valid")
}
