#![allow(dead_code)]

use nalgebra::DMatrix;
use nambu_core::nambu::{Monomial, Polynomial};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_point(rng: &mut impl Rng, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Random polynomial in `dim` variables with `terms` monomials of total
/// degree at most `max_degree`.
pub fn random_polynomial(rng: &mut impl Rng, dim: usize, terms: usize, max_degree: u32) -> Polynomial {
    let monomials = (0..terms)
        .map(|_| {
            let mut powers = vec![0u32; dim];
            let degree = rng.gen_range(1..=max_degree);
            for _ in 0..degree {
                powers[rng.gen_range(0..dim)] += 1;
            }
            Monomial {
                coeff: rng.gen_range(-1.0..1.0),
                powers,
            }
        })
        .collect();
    Polynomial::new(monomials)
}

/// `exp(A)` by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Determinant by cofactor expansion along the first row.
pub fn det_cofactor(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|col| {
            let minor: Vec<Vec<f64>> = m[1..]
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(j, _)| *j != col)
                        .map(|(_, v)| *v)
                        .collect()
                })
                .collect();
            let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[0][col] * det_cofactor(&minor)
        })
        .sum()
}

/// Central-difference derivative of a scalar function along coordinate `k`.
pub fn partial(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let step = h * x[k].abs().max(1.0);
    let mut p = x.to_vec();
    p[k] = x[k] + step;
    let plus = f(&p);
    p[k] = x[k] - step;
    let minus = f(&p);
    (plus - minus) / (2.0 * step)
}

/// Every tuple in `0..dim` of length `order`, in lexicographic order.
pub fn all_tuples(order: usize, dim: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..order {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..dim).map(move |k| {
                    let mut t = t.clone();
                    t.push(k);
                    t
                })
            })
            .collect();
    }
    out
}
