//! Fully antisymmetric arrays stored by their strictly increasing index
//! tuples, plus the permutation helpers used for Levi-Civita contractions.

use crate::error::{Error, Result};

/// Sign of the permutation that sorts `indices`, or 0 if any index repeats.
pub fn permutation_sign(indices: &[usize]) -> i8 {
    let mut sign = 1i8;
    for i in 0..indices.len() {
        for j in (i + 1)..indices.len() {
            match indices[i].cmp(&indices[j]) {
                std::cmp::Ordering::Equal => return 0,
                std::cmp::Ordering::Greater => sign = -sign,
                std::cmp::Ordering::Less => {}
            }
        }
    }
    sign
}

/// All permutations of `0..k` together with their signs.
pub fn signed_permutations(k: usize) -> Vec<(Vec<usize>, i8)> {
    fn build(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                build(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut perms = Vec::new();
    build(&mut Vec::with_capacity(k), &mut vec![false; k], &mut perms);
    perms
        .into_iter()
        .map(|p| {
            let s = permutation_sign(&p);
            (p, s)
        })
        .collect()
}

/// Strictly increasing `k`-tuples drawn from `0..n`, in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        let mut i = k;
        while i > 0 && c[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        c[i - 1] += 1;
        for j in i..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Colexicographic rank of a strictly increasing tuple.
fn colex_rank(sorted: &[usize]) -> usize {
    sorted
        .iter()
        .enumerate()
        .map(|(i, &c)| binomial(c, i + 1))
        .sum()
}

/// An order-`n` fully antisymmetric array over `dim` indices.
///
/// Only components with strictly increasing indices are stored; every other
/// component is recovered with the sign of the sorting permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct AntisymmetricTensor {
    order: usize,
    dim: usize,
    components: Vec<f64>,
}

impl AntisymmetricTensor {
    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        if order == 0 || order > dim {
            return Err(Error::DegenerateOrder { order, dim });
        }
        Ok(Self {
            order,
            dim,
            components: vec![0.0; binomial(dim, order)],
        })
    }

    /// An order-1 tensor (covector) with the given components.
    pub fn from_vector(v: &[f64]) -> Self {
        assert!(!v.is_empty());
        Self {
            order: 1,
            dim: v.len(),
            components: v.to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Canonical index tuples, in storage order.
    pub fn canonical_indices(&self) -> Vec<Vec<usize>> {
        let mut all = combinations(self.dim, self.order);
        all.sort_by_key(|c| colex_rank(c));
        all
    }

    /// Stored components, aligned with [`Self::canonical_indices`].
    pub fn components(&self) -> &[f64] {
        &self.components
    }

    fn locate(&self, indices: &[usize]) -> Option<(usize, f64)> {
        assert_eq!(indices.len(), self.order, "wrong number of indices");
        assert!(indices.iter().all(|&i| i < self.dim), "index out of range");
        let sign = permutation_sign(indices);
        if sign == 0 {
            return None;
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        Some((colex_rank(&sorted), f64::from(sign)))
    }

    pub fn get(&self, indices: &[usize]) -> f64 {
        match self.locate(indices) {
            Some((pos, sign)) => sign * self.components[pos],
            None => 0.0,
        }
    }

    /// Sets the component at `indices` (any ordering); the antisymmetric
    /// partners follow automatically.
    ///
    /// Panics if an index repeats and `value` is nonzero.
    pub fn set(&mut self, indices: &[usize], value: f64) {
        match self.locate(indices) {
            Some((pos, sign)) => self.components[pos] = sign * value,
            None => assert!(value == 0.0, "repeated index must hold zero"),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}
