//! Discrete dynamical systems `S(k+1) = Φ(S(k))` and their linear costate
//! co-processor.
//!
//! The costate row `l(k)` follows
//!
//! ```text
//! l(k+1) = l(k) · M⁻¹(S),    M_nm = ∂Φ_n/∂S_m
//! ```
//!
//! which keeps the pairing of `l` with tangent perturbations constant along
//! orbits. A step map is reversible where `M` is regular.
//!
//! Everything here is generic over [`Scalar`], so integer and rational maps
//! can run their co-processor in exact arithmetic.

use std::fmt::{self, Debug};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

use crate::error::{Error, Result};
use crate::flows::{jacobian_fd, scaled_step, VectorField, DEFAULT_FD_STEP};

/// Default relative determinant threshold for regularity of `M`.
pub const REVERSIBILITY_TOLERANCE: f64 = 1e-12;

/// Number type for step maps.
pub trait Scalar: Num + Signed + Clone + Debug + PartialOrd + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn floor(&self) -> Self;
    fn is_finite(&self) -> bool;

    fn fract(&self) -> Self {
        self.clone() - self.floor()
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn floor(&self) -> Self {
        f64::floor(*self)
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Scalar for BigRational {
    /// Exact conversion of the binary value; panics on non-finite input.
    fn from_f64(v: f64) -> Self {
        <BigRational as FromPrimitive>::from_f64(v).expect("rational from non-finite float")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn floor(&self) -> Self {
        num_rational::Ratio::floor(self)
    }

    fn is_finite(&self) -> bool {
        true
    }
}

/// Exact rational from an integer.
pub fn rational(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Dense row-major matrix.
pub type Matrix<T> = Vec<Vec<T>>;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

fn mat_vec<T: Scalar>(m: &Matrix<T>, v: &[T]) -> Vec<T> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn transpose<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let n = m.len();
    let cols = m.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| (0..n).map(|i| m[i][j].clone()).collect())
        .collect()
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    factors: Matrix<T>,
    perm: Vec<usize>,
    odd: bool,
    singular: bool,
}

impl<T: Scalar> Lu<T> {
    pub fn new(m: &Matrix<T>) -> Self {
        let n = m.len();
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut odd = false;
        let mut singular = false;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[i][col]
                        .abs()
                        .partial_cmp(&a[j][col].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            if a[pivot][col].is_zero() {
                singular = true;
                continue;
            }
            if pivot != col {
                a.swap(pivot, col);
                perm.swap(pivot, col);
                odd = !odd;
            }
            for row in (col + 1)..n {
                let factor = a[row][col].clone() / a[col][col].clone();
                for k in col..n {
                    let delta = factor.clone() * a[col][k].clone();
                    a[row][k] = a[row][k].clone() - delta;
                }
                a[row][col] = factor;
            }
        }
        Self {
            factors: a,
            perm,
            odd,
            singular,
        }
    }

    pub fn determinant(&self) -> T {
        if self.singular {
            return T::zero();
        }
        let prod = (0..self.factors.len()).fold(T::one(), |acc, i| acc * self.factors[i][i].clone());
        if self.odd {
            -prod
        } else {
            prod
        }
    }

    /// Solves `A x = b`; `None` when a pivot vanished.
    pub fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        if self.singular {
            return None;
        }
        let n = self.factors.len();
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p].clone()).collect();
        for i in 0..n {
            for k in 0..i {
                let delta = self.factors[i][k].clone() * y[k].clone();
                y[i] = y[i].clone() - delta;
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let delta = self.factors[i][k].clone() * y[k].clone();
                y[i] = y[i].clone() - delta;
            }
            y[i] = y[i].clone() / self.factors[i][i].clone();
        }
        Some(y)
    }
}

type StepFn<T> = dyn Fn(&[T]) -> Vec<T> + Send + Sync;
type MatrixFn<T> = dyn Fn(&[T]) -> Matrix<T> + Send + Sync;

/// A step map `Φ` on `dim` components, with optional analytic Jacobian and
/// optional reverse map.
#[derive(Clone)]
pub struct DiscreteSystem<T: Scalar = f64> {
    dim: usize,
    step: Arc<StepFn<T>>,
    jacobian: Option<Arc<MatrixFn<T>>>,
    inverse: Option<Arc<StepFn<T>>>,
    fd_step: f64,
}

impl<T: Scalar> Debug for DiscreteSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteSystem")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("inverse", &self.inverse.is_some())
            .finish()
    }
}

impl<T: Scalar> DiscreteSystem<T> {
    pub fn new<F>(dim: usize, step: F) -> Self
    where
        F: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    {
        Self {
            dim,
            step: Arc::new(step),
            jacobian: None,
            inverse: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[T]) -> Matrix<T> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_inverse<F>(mut self, inverse: F) -> Self
    where
        F: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self, s: &[T]) -> Vec<T> {
        (self.step)(s)
    }

    pub fn inverse_step(&self, s: &[T]) -> Option<Vec<T>> {
        self.inverse.as_ref().map(|f| f(s))
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    /// `M_nm = ∂Φ_n/∂S_m`, analytic when available, central differences
    /// with per-coordinate step `h · max(1, |S_m|)` otherwise.
    pub fn jacobian(&self, s: &[T]) -> Result<Matrix<T>> {
        if s.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: s.len(),
            });
        }
        let m = match &self.jacobian {
            Some(j) => j(s),
            None => self.jacobian_fd(s),
        };
        if m.iter().flatten().all(Scalar::is_finite) {
            Ok(m)
        } else {
            Err(Error::NonFinite { what: "step-map Jacobian" })
        }
    }

    fn jacobian_fd(&self, s: &[T]) -> Matrix<T> {
        let n = self.dim;
        let mut m = vec![vec![T::zero(); n]; n];
        let mut probe = s.to_vec();
        for col in 0..n {
            let h = T::from_f64(scaled_step(self.fd_step, s[col].to_f64()));
            probe[col] = s[col].clone() + h.clone();
            let plus = self.step(&probe);
            probe[col] = s[col].clone() - h.clone();
            let minus = self.step(&probe);
            probe[col] = s[col].clone();
            let two_h = h.clone() + h;
            for row in 0..n {
                m[row][col] = (plus[row].clone() - minus[row].clone()) / two_h.clone();
            }
        }
        m
    }

    /// Orbit `S(0), …, S(steps)`.
    pub fn orbit(&self, s0: &[T], steps: usize) -> Vec<Vec<T>> {
        let mut out = Vec::with_capacity(steps + 1);
        out.push(s0.to_vec());
        for k in 0..steps {
            let next = self.step(&out[k]);
            out.push(next);
        }
        out
    }

    /// Tangent transport `δS ↦ M(S) δS`.
    pub fn tangent_step(&self, s: &[T], ds: &[T]) -> Result<Vec<T>> {
        Ok(mat_vec(&self.jacobian(s)?, ds))
    }
}

impl DiscreteSystem<f64> {
    /// `Φ = id + τ v`, with `M = I + τ ∂v` taken from the field's Jacobian.
    pub fn euler(v: &VectorField, tau: f64) -> Self {
        let step_field = v.clone();
        let jac_field = v.clone();
        let n = v.dim();
        Self::new(n, move |s| {
            step_field
                .eval(s)
                .iter()
                .zip(s)
                .map(|(vi, si)| si + tau * vi)
                .collect()
        })
        .with_jacobian(move |s| {
            let j = jac_field
                .jacobian(s)
                .unwrap_or_else(|_| nalgebra::DMatrix::from_element(n, n, f64::NAN));
            identity_plus(&j, tau)
        })
    }
}

fn identity_plus(j: &nalgebra::DMatrix<f64>, tau: f64) -> Matrix<f64> {
    let n = j.nrows();
    (0..n)
        .map(|r| {
            (0..n)
                .map(|c| if r == c { 1.0 } else { 0.0 } + tau * j[(r, c)])
                .collect()
        })
        .collect()
}

fn int<T: Scalar>(n: i64) -> T {
    T::from_f64(n as f64)
}

/// Arnold's cat map `S ↦ [[2,1],[1,1]] S mod 1`.
pub fn cat_map<T: Scalar>() -> DiscreteSystem<T> {
    DiscreteSystem::new(2, |s: &[T]| {
        let two: T = int(2);
        vec![
            (two * s[0].clone() + s[1].clone()).fract(),
            (s[0].clone() + s[1].clone()).fract(),
        ]
    })
    .with_jacobian(|_| vec![vec![int(2), int(1)], vec![int(1), int(1)]])
    .with_inverse(|s: &[T]| {
        let two: T = int(2);
        vec![
            (s[0].clone() - s[1].clone()).fract(),
            (two * s[1].clone() - s[0].clone()).fract(),
        ]
    })
}

/// The copying gate `(S1, S2) ↦ (S1, S1)`.
pub fn fan_out<T: Scalar>() -> DiscreteSystem<T> {
    DiscreteSystem::new(2, |s: &[T]| vec![s[0].clone(), s[0].clone()])
}

/// The cubic shear `(S1, S2) ↦ (S1 + S2³, S2)`; Jacobian by finite differences.
pub fn cubic_shear<T: Scalar>() -> DiscreteSystem<T> {
    DiscreteSystem::new(2, |s: &[T]| {
        let cube = s[1].clone() * s[1].clone() * s[1].clone();
        vec![s[0].clone() + cube, s[1].clone()]
    })
    .with_inverse(|s: &[T]| {
        let cube = s[1].clone() * s[1].clone() * s[1].clone();
        vec![s[0].clone() - cube, s[1].clone()]
    })
}

/// Constant linear map `S ↦ A S`.
pub fn linear_map<T: Scalar>(a: Matrix<T>) -> DiscreteSystem<T> {
    let dim = a.len();
    let jac = a.clone();
    DiscreteSystem::new(dim, move |s: &[T]| mat_vec(&a, s)).with_jacobian(move |_| jac.clone())
}

/// Classification of a step map at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reversibility {
    Reversible { det: f64, condition: f64 },
    Irreversible { det: f64, condition: f64 },
}

impl Reversibility {
    pub fn is_reversible(&self) -> bool {
        matches!(self, Reversibility::Reversible { .. })
    }

    pub fn det(&self) -> f64 {
        match self {
            Reversibility::Reversible { det, .. } | Reversibility::Irreversible { det, .. } => *det,
        }
    }

    pub fn condition(&self) -> f64 {
        match self {
            Reversibility::Reversible { condition, .. }
            | Reversibility::Irreversible { condition, .. } => *condition,
        }
    }
}

fn one_norm(m: &Matrix<f64>) -> f64 {
    let n = m.len();
    (0..n)
        .map(|c| m.iter().map(|row| row[c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn classify<T: Scalar>(m: &Matrix<T>, tol: f64) -> (Reversibility, Lu<T>) {
    let lu = Lu::new(m);
    let det = lu.determinant();
    let det_f = det.to_f64();
    // Hadamard bound: |det| <= Π ||row||₂
    let scale: f64 = m
        .iter()
        .map(|row| row.iter().map(|c| c.to_f64().powi(2)).sum::<f64>().sqrt())
        .product();
    let regular = !det.is_zero() && scale > 0.0 && det_f.abs() > tol * scale;
    if !regular {
        return (
            Reversibility::Irreversible {
                det: det_f,
                condition: f64::INFINITY,
            },
            lu,
        );
    }
    let n = m.len();
    let inverse_columns: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![T::zero(); n];
            e[c] = T::one();
            lu.solve(&e)
                .map(|x| x.iter().map(Scalar::to_f64).collect())
                .unwrap_or_else(|| vec![f64::INFINITY; n])
        })
        .collect();
    let inv_norm = inverse_columns
        .iter()
        .map(|col| col.iter().map(|c| c.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let m_f: Matrix<f64> = m
        .iter()
        .map(|row| row.iter().map(Scalar::to_f64).collect())
        .collect();
    (
        Reversibility::Reversible {
            det: det_f,
            condition: one_norm(&m_f) * inv_norm,
        },
        lu,
    )
}

/// Reversible iff `|det M| > tol · Π_n ||M_n·||₂` at `s`; also reports the
/// 1-norm condition number of `M` (infinite when irreversible).
pub fn reversibility<T: Scalar>(sys: &DiscreteSystem<T>, s: &[T], tol: f64) -> Result<Reversibility> {
    let m = sys.jacobian(s)?;
    Ok(classify(&m, tol).0)
}

/// State of the map together with its costate row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedDiscreteState<T: Scalar = f64> {
    pub s: Vec<T>,
    pub l: Vec<T>,
}

impl<T: Scalar> ExtendedDiscreteState<T> {
    pub fn new(s: Vec<T>, l: Vec<T>) -> Result<Self> {
        if s.len() != l.len() {
            return Err(Error::Dimension {
                expected: s.len(),
                got: l.len(),
            });
        }
        Ok(Self { s, l })
    }
}

/// Where `M` is evaluated when advancing the costate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostateConvention {
    /// `l(k+1) = l(k) · M⁻¹(S(k+1))`, the explicit form read literally. The
    /// conserved pairing is then `l(k) · δS(k+1)`.
    #[default]
    NextState,
    /// `l(k+1) = l(k) · M⁻¹(S(k))`. The conserved pairing is `l(k) · δS(k)`.
    CurrentState,
}

/// Advances `(S, l)` by one step with the default convention.
pub fn costate_step<T: Scalar>(
    sys: &DiscreteSystem<T>,
    es: &ExtendedDiscreteState<T>,
) -> Result<ExtendedDiscreteState<T>> {
    costate_step_with(sys, es, CostateConvention::default())
}

pub fn costate_step_with<T: Scalar>(
    sys: &DiscreteSystem<T>,
    es: &ExtendedDiscreteState<T>,
    convention: CostateConvention,
) -> Result<ExtendedDiscreteState<T>> {
    if es.s.len() != sys.dim() || es.l.len() != sys.dim() {
        return Err(Error::Dimension {
            expected: sys.dim(),
            got: es.s.len().max(es.l.len()),
        });
    }
    let next = sys.step(&es.s);
    let at = match convention {
        CostateConvention::NextState => &next,
        CostateConvention::CurrentState => &es.s,
    };
    let m = sys.jacobian(at)?;
    let (class, _) = classify(&m, REVERSIBILITY_TOLERANCE);
    if !class.is_reversible() {
        return Err(Error::Irreversible { det: class.det() });
    }
    // l' M = l  <=>  Mᵀ l'ᵀ = lᵀ
    let lu_t = Lu::new(&transpose(&m));
    let l = lu_t.solve(&es.l).ok_or(Error::Irreversible { det: class.det() })?;
    Ok(ExtendedDiscreteState { s: next, l })
}

/// Pairings of the costate with a transported tangent perturbation along an
/// orbit of `steps` steps; every entry equals the first for an exact
/// co-processor.
///
/// With [`CostateConvention::NextState`] entry `k` is `l(k) · δS(k+1)`, with
/// [`CostateConvention::CurrentState`] it is `l(k) · δS(k)`.
pub fn duality_pairings<T: Scalar>(
    sys: &DiscreteSystem<T>,
    s0: &[T],
    l0: &[T],
    ds0: &[T],
    steps: usize,
    convention: CostateConvention,
) -> Result<Vec<T>> {
    if ds0.len() != sys.dim() {
        return Err(Error::Dimension {
            expected: sys.dim(),
            got: ds0.len(),
        });
    }
    let mut es = ExtendedDiscreteState::new(s0.to_vec(), l0.to_vec())?;
    let mut ds = ds0.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let ds_next = sys.tangent_step(&es.s, &ds)?;
        out.push(match convention {
            CostateConvention::NextState => dot(&es.l, &ds_next),
            CostateConvention::CurrentState => dot(&es.l, &ds),
        });
        if k < steps {
            es = costate_step_with(sys, &es, convention)?;
            ds = ds_next;
        }
    }
    Ok(out)
}

/// Action-sum value `Σ_k Σ_n l_n(k) Φ_n(S(k))`.
pub fn discrete_hamiltonian<T: Scalar>(
    sys: &DiscreteSystem<T>,
    orbit: &[Vec<T>],
    costates: &[Vec<T>],
) -> Result<T> {
    if orbit.len() != costates.len() {
        return Err(Error::Shape(format!(
            "{} states but {} costates",
            orbit.len(),
            costates.len()
        )));
    }
    let mut total = T::zero();
    for (k, (s, l)) in orbit.iter().zip(costates).enumerate() {
        if s.len() != sys.dim() || l.len() != sys.dim() {
            return Err(Error::Shape(format!("sample {k} has the wrong dimension")));
        }
        let phi = sys.step(s);
        for n in 0..sys.dim() {
            total = total + l[n].clone() * phi[n].clone();
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceSample {
    pub tau: f64,
    pub det: f64,
    /// `det M - 1 - τ div v`
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub divergence: f64,
    pub samples: Vec<CoherenceSample>,
    /// Least-squares slope of `ln|residual|` against `ln τ`; `None` when
    /// fewer than two residuals are nonzero.
    pub residual_order: Option<f64>,
    /// `(det M - 1)/τ` extrapolated polynomially to `τ = 0`.
    pub first_order_estimate: f64,
}

/// Compares `det M` of `Φ = id + τ v` with `1 + τ div v` at `x` for every
/// step size in `taus`.
pub fn coherence_check(v: &VectorField, x: &[f64], taus: &[f64]) -> Result<CoherenceReport> {
    if taus.is_empty() || taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Config("coherence check needs positive step sizes".into()));
    }
    let j = jacobian_fd(v, x, DEFAULT_FD_STEP)?;
    let divergence = j.trace();
    let samples: Vec<CoherenceSample> = taus
        .iter()
        .map(|&tau| {
            let det = Lu::new(&identity_plus(&j, tau)).determinant();
            CoherenceSample {
                tau,
                det,
                residual: det - 1.0 - tau * divergence,
            }
        })
        .collect();

    let points: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.residual != 0.0)
        .map(|s| (s.tau.ln(), s.residual.abs().ln()))
        .collect();
    let residual_order = (points.len() >= 2).then(|| {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });

    // Neville extrapolation of g(τ) = (det - 1)/τ to τ = 0
    let xs: Vec<f64> = samples.iter().map(|s| s.tau).collect();
    let mut g: Vec<f64> = samples.iter().map(|s| (s.det - 1.0) / s.tau).collect();
    for level in 1..g.len() {
        for i in 0..g.len() - level {
            g[i] = (xs[i + level] * g[i] - xs[i] * g[i + 1]) / (xs[i + level] - xs[i]);
        }
    }

    Ok(CoherenceReport {
        divergence,
        samples,
        residual_order,
        first_order_estimate: g[0],
    })
}
