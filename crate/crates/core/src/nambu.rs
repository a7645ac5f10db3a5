//! Nambu-Poisson flows generated by `p` Hamiltonians,
//!
//! ```text
//! v_n = ρ ε_{n m1…mp} ∂H_1/∂x_{m1} … ∂H_p/∂x_{mp}
//! ```
//!
//! For `p + 1 < N` the symbol `ε` is the constant totally antisymmetric
//! `(p+1)`-tensor whose strictly increasing components are all `+1`; for
//! `p + 1 = N` this is the ordinary Levi-Civita symbol. Every `H_i` is
//! conserved and the flow is divergence-free for any such constant tensor.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{
    gradient_fd, integrate, Drift, IntegratorConfig, Monitor, ScalarFn, VectorField,
    DEFAULT_FD_STEP,
};
use crate::tensor::{combinations, permutation_sign, signed_permutations};

type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A scalar function with an optional analytic gradient.
#[derive(Clone)]
pub struct Hamiltonian {
    f: Arc<ScalarFn>,
    grad: Option<Arc<GradientFn>>,
}

impl fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hamiltonian")
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl Hamiltonian {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            grad: None,
        }
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// Analytic gradient if supplied, central differences with step `h` otherwise.
    pub fn gradient(&self, x: &[f64], h: f64) -> Result<Vec<f64>> {
        match &self.grad {
            Some(g) => {
                let out = g(x);
                if out.iter().all(|c| c.is_finite()) {
                    Ok(out)
                } else {
                    Err(Error::NonFinite { what: "gradient" })
                }
            }
            None => gradient_fd(&*self.f, x, h),
        }
    }
}

/// One term `coeff · Π x_i^{powers_i}` of a [`Polynomial`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// A sparse real polynomial, differentiated exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Self { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.powers
                        .iter()
                        .zip(x)
                        .map(|(&p, xi)| xi.powi(p as i32))
                        .product::<f64>()
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; x.len()];
        for t in &self.terms {
            for (j, g) in grad.iter_mut().enumerate() {
                let pj = t.powers.get(j).copied().unwrap_or(0);
                if pj == 0 {
                    continue;
                }
                let rest: f64 = t
                    .powers
                    .iter()
                    .zip(x)
                    .enumerate()
                    .map(|(i, (&p, xi))| {
                        if i == j {
                            f64::from(p) * xi.powi(p as i32 - 1)
                        } else {
                            xi.powi(p as i32)
                        }
                    })
                    .product();
                *g += t.coeff * rest;
            }
        }
        grad
    }

    /// Number of variables the polynomial refers to.
    pub fn arity(&self) -> usize {
        self.terms.iter().map(|t| t.powers.len()).max().unwrap_or(0)
    }

    pub fn into_hamiltonian(self) -> Hamiltonian {
        let g = self.clone();
        Hamiltonian::new(move |x| self.eval(x)).with_gradient(move |x| g.gradient(x))
    }
}

/// `p` Hamiltonians on `R^N` with a constant weight multiplying `ε`.
#[derive(Debug, Clone)]
pub struct NambuSystem {
    dim: usize,
    hamiltonians: Vec<Hamiltonian>,
    weight: f64,
    fd_step: f64,
}

impl NambuSystem {
    pub fn new(dim: usize, hamiltonians: Vec<Hamiltonian>, weight: f64) -> Result<Self> {
        let p = hamiltonians.len();
        if p == 0 || p >= dim {
            return Err(Error::DegenerateOrder { order: p, dim });
        }
        if !weight.is_finite() || weight == 0.0 {
            return Err(Error::Config(format!(
                "Nambu weight must be finite and nonzero, got {weight}"
            )));
        }
        Ok(Self {
            dim,
            hamiltonians,
            weight,
            fd_step: DEFAULT_FD_STEP,
        })
    }

    /// Step used for Hamiltonians without analytic gradients.
    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.hamiltonians.len()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn hamiltonians(&self) -> &[Hamiltonian] {
        &self.hamiltonians
    }

    /// The flow as a [`VectorField`]; gradient failures surface as NaN.
    pub fn vector_field(&self) -> VectorField {
        let sys = self.clone();
        VectorField::new(self.dim, move |x| {
            nambu_flow(&sys, x, sys.fd_step).unwrap_or_else(|_| vec![f64::NAN; sys.dim])
        })
    }

    /// Monitors `H1 … Hp`.
    pub fn monitors(&self) -> Vec<Monitor> {
        self.hamiltonians
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let h = h.clone();
                Monitor::new(format!("H{}", i + 1), move |x| h.eval(x))
            })
            .collect()
    }
}

/// `Σ_σ sgn(σ) Π_i rows[i][cols[σ(i)]]`
fn signed_product_sum(rows: &[Vec<f64>], cols: &[usize], perms: &[(Vec<usize>, i8)]) -> f64 {
    perms
        .iter()
        .map(|(p, sign)| {
            f64::from(*sign)
                * rows
                    .iter()
                    .zip(p)
                    .map(|(row, &k)| row[cols[k]])
                    .product::<f64>()
        })
        .sum()
}

/// Velocity of the Nambu flow at `x`; Hamiltonians without analytic
/// gradients are differentiated with step `h`.
pub fn nambu_flow(sys: &NambuSystem, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = sys.dim;
    let p = sys.order();
    if p >= n {
        return Err(Error::DegenerateOrder { order: p, dim: n });
    }
    if x.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: x.len(),
        });
    }
    let grads = sys
        .hamiltonians
        .iter()
        .map(|ham| ham.gradient(x, h))
        .collect::<Result<Vec<_>>>()?;
    let perms = signed_permutations(p);
    let mut v = vec![0.0; n];
    let mut slots = Vec::with_capacity(p + 1);
    for subset in combinations(n, p + 1) {
        // the subset contributes to each of its members through the remaining p slots
        for (pos, &lead) in subset.iter().enumerate() {
            let rest: Vec<usize> = subset
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != pos)
                .map(|(_, &k)| k)
                .collect();
            slots.clear();
            slots.push(lead);
            slots.extend_from_slice(&rest);
            let sign = f64::from(permutation_sign(&slots));
            v[lead] += sign * signed_product_sum(&grads, &rest, &perms);
        }
    }
    for c in &mut v {
        *c *= sys.weight;
    }
    Ok(v)
}

/// Three-slot bracket `ρ ε_ijk ∂_i A ∂_j B ∂_k C` on `R^3`.
pub fn bracket3<A, B, C>(weight: f64, a: A, b: B, c: C, u: &[f64], h: f64) -> Result<f64>
where
    A: Fn(&[f64]) -> f64,
    B: Fn(&[f64]) -> f64,
    C: Fn(&[f64]) -> f64,
{
    if u.len() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            got: u.len(),
        });
    }
    let grads = vec![gradient_fd(a, u, h)?, gradient_fd(b, u, h)?, gradient_fd(c, u, h)?];
    Ok(weight * signed_product_sum(&grads, &[0, 1, 2], &signed_permutations(3)))
}

/// Integrates the Nambu flow and reports the drift of every Hamiltonian,
/// relative to `max(1, |H_i(x0)|)`.
pub fn hamiltonian_drift(
    sys: &NambuSystem,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Drift>> {
    let traj = integrate(&sys.vector_field(), x0, cfg, &sys.monitors())?;
    Ok(traj.drifts())
}
