#![allow(dead_code)]

use gltr::TriMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.qr().q()
}

/// `QΘQᵀ` with the given spectrum.
pub fn with_spectrum(rng: &mut ChaCha8Rng, theta: &[f64]) -> DMatrix<f64> {
    let q = random_orthogonal(rng, theta.len());
    let h = &q * DMatrix::from_diagonal(&DVector::from_column_slice(theta)) * q.transpose();
    0.5 * (&h + h.transpose())
}

pub fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    0.5 * (&a + a.transpose())
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    with_spectrum(rng, &theta)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_irreducible(rng: &mut ChaCha8Rng, n: usize) -> TriMatrix {
    let diag = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let off = (1..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.5);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    TriMatrix::new(diag, off)
}

pub fn first_unit(n: usize, gamma0: f64) -> Vec<f64> {
    let mut g = vec![0.0; n];
    g[0] = gamma0;
    g
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
