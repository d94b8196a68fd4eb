#![allow(dead_code)]

use mcascade::matrix::primitivity_exponent;
use mcascade::rng::CounterRng;
use mcascade::{Atom, CascadeModel, Matrix};

/// Random finite-atom model with `p ≤ 3`, at most 3 atoms and at most 3
/// children per atom; about a quarter of the entries are zero. Retries until
/// the mean matrix is primitive.
pub fn random_primitive_model(rng: &mut CounterRng) -> CascadeModel {
    loop {
        let p = 1 + (rng.uniform() * 3.0) as usize;
        let n_atoms = 1 + (rng.uniform() * 3.0) as usize;
        let weights: Vec<f64> = (0..n_atoms).map(|_| 0.1 + rng.uniform()).collect();
        let total: f64 = weights.iter().sum();
        let atoms: Vec<Atom> = weights
            .iter()
            .map(|w| {
                let children = 1 + (rng.uniform() * 3.0) as usize;
                let matrices = (0..children)
                    .map(|_| {
                        let data = (0..p * p)
                            .map(|_| {
                                if rng.uniform() < 0.25 {
                                    0.0
                                } else {
                                    0.05 + 0.95 * rng.uniform()
                                }
                            })
                            .collect();
                        Matrix::from_flat(p, data)
                    })
                    .collect();
                Atom {
                    prob: w / total,
                    matrices,
                }
            })
            .collect();
        let model = CascadeModel::from_atoms(p, atoms).expect("valid atoms");
        if primitivity_exponent(&model.mean_matrix().0).is_some() {
            return model;
        }
    }
}

pub fn random_models(count: usize, key: u64) -> Vec<CascadeModel> {
    let mut rng = CounterRng::new(key);
    (0..count)
        .map(|_| random_primitive_model(&mut rng))
        .collect()
}

/// `E Σ_{|u|=n} (X_u)^{∘t}` by enumerating every length-n sequence of
/// (atom, child) pairs: along a single path the atoms are independent, so
/// each sequence contributes the product of its atom probabilities.
pub fn brute_force_moment(model: &CascadeModel, t: f64, n: usize) -> Matrix {
    let atoms = model.real_atoms().expect("real model");
    let p = model.p();
    let steps: Vec<(f64, &Matrix)> = atoms
        .iter()
        .flat_map(|a| a.matrices.iter().map(move |m| (a.prob, m)))
        .collect();
    let mut out = vec![0.0; p * p];
    let mut stack: Vec<(usize, f64, Matrix)> = vec![(0, 1.0, Matrix::identity(p))];
    while let Some((depth, w, x)) = stack.pop() {
        if depth == n {
            for i in 0..p {
                for j in 0..p {
                    out[i * p + j] += w * x.get(i, j).powf(t);
                }
            }
            continue;
        }
        for &(q, a) in &steps {
            stack.push((depth + 1, w * q, x.matmul(a)));
        }
    }
    Matrix::from_flat(p, out)
}

/// `max |a − b| / max(1, max |a|)`.
pub fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.max_abs_diff(b) / a.max_entry().abs().max(1.0)
}
