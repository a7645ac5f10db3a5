//! Costate extension of a flow and the structures built on it.
//!
//! The extended system pairs `x` with a costate `ψ`:
//!
//! ```text
//! ẋ_n = v_n(x),    ψ̇_n = -Σ_m (∂v_m/∂x_n) ψ_m
//! ```
//!
//! It is generated by `H1 = Σ v_n ψ_n` under the bracket pairing `x_n` with
//! `ψ_n`. Polynomial integrals in `ψ` are represented by antisymmetric
//! coefficient tensors; such a tensor gives an integral exactly when its
//! transport derivative along the flow vanishes (see [`mbky_residual`]).
//!
//! The module also carries the first-order (one-form) Hamiltonization: a
//! Lagrangian `f_n(x) ẋ_n - H(x)` has structure matrix
//! `f_mn = ∂_m f_n - ∂_n f_m` whose inverse is the Poisson matrix.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flows::{gradient_fd, jacobian_fd, jacobian_fd_map, Monitor, VectorField};
use crate::tensor::{factorial, signed_permutations, AntisymmetricTensor};

/// Relative determinant threshold below which a structure matrix counts as singular.
pub const SINGULAR_STRUCTURE_TOLERANCE: f64 = 1e-12;

/// Paired state `(x, ψ)` of the extended system.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateState {
    pub x: Vec<f64>,
    pub psi: Vec<f64>,
}

impl CostateState {
    pub fn new(x: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        if x.len() != psi.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: psi.len(),
            });
        }
        Ok(Self { x, psi })
    }

    /// Splits a concatenated `[x, ψ]` vector.
    pub fn from_concatenated(y: &[f64]) -> Result<Self> {
        if !y.len().is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "extended state has odd length {}",
                y.len()
            )));
        }
        let n = y.len() / 2;
        Ok(Self {
            x: y[..n].to_vec(),
            psi: y[n..].to_vec(),
        })
    }

    pub fn to_concatenated(&self) -> Vec<f64> {
        let mut y = self.x.clone();
        y.extend_from_slice(&self.psi);
        y
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

fn costate_rate(v: &VectorField, x: &[f64], psi: &[f64]) -> Result<Vec<f64>> {
    let jac = v.jacobian(x)?;
    let rate = -(jac.transpose() * DVector::from_column_slice(psi));
    Ok(rate.as_slice().to_vec())
}

/// Velocity of the extended system at `s`.
pub fn extended_velocity(v: &VectorField, s: &CostateState) -> Result<CostateState> {
    if s.dim() != v.dim() {
        return Err(Error::Dimension {
            expected: v.dim(),
            got: s.dim(),
        });
    }
    Ok(CostateState {
        x: v.eval(&s.x),
        psi: costate_rate(v, &s.x, &s.psi)?,
    })
}

/// The extended field on `[x, ψ]` (dimension `2N`).
///
/// Uses the analytic Jacobian of `v` when present. A Jacobian evaluation
/// failure inside the field surfaces as non-finite output, which the
/// integrators report as a blow-up.
pub fn extend(v: &VectorField) -> VectorField {
    let n = v.dim();
    let base = v.clone();
    let guard_base = v.clone();
    VectorField::new(2 * n, move |y| {
        let (x, psi) = y.split_at(n);
        let mut out = base.eval(x);
        match costate_rate(&base, x, psi) {
            Ok(rate) => out.extend(rate),
            Err(_) => out.extend(std::iter::repeat_n(f64::NAN, n)),
        }
        out
    })
    .with_guard(move |y| guard_base.check_state(&y[..n]))
}

/// The extended field augmented with a tangent perturbation `δx` carried by
/// the linearized flow: state `[x, ψ, δx]` of dimension `3N`.
///
/// The pairing `ψ · δx` is an exact invariant of this system.
pub fn extend_with_tangent(v: &VectorField) -> VectorField {
    let n = v.dim();
    let base = v.clone();
    let guard_base = v.clone();
    VectorField::new(3 * n, move |y| {
        let x = &y[..n];
        let psi = DVector::from_column_slice(&y[n..2 * n]);
        let dx = DVector::from_column_slice(&y[2 * n..]);
        let mut out = base.eval(x);
        match base.jacobian(x) {
            Ok(jac) => {
                out.extend((-(jac.transpose() * psi)).iter());
                out.extend((jac * dx).iter());
            }
            Err(_) => out.extend(std::iter::repeat_n(f64::NAN, 2 * n)),
        }
        out
    })
    .with_guard(move |y| guard_base.check_state(&y[..n]))
}

/// First-level Hamiltonian `Σ_n v_n(x) ψ_n`.
pub fn h1(v: &VectorField, s: &CostateState) -> Result<f64> {
    if s.dim() != v.dim() {
        return Err(Error::Dimension {
            expected: v.dim(),
            got: s.dim(),
        });
    }
    let vel = v.eval(&s.x);
    let value: f64 = vel.iter().zip(&s.psi).map(|(a, b)| a * b).sum();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what: "first-level Hamiltonian" })
    }
}

/// Monitor of `H1` on the concatenated `[x, ψ]` (or `[x, ψ, δx]`) state.
pub fn h1_monitor(v: &VectorField) -> Monitor {
    let v = v.clone();
    Monitor::new("H1", move |y| {
        let n = v.dim();
        v.eval(&y[..n]).iter().zip(&y[n..2 * n]).map(|(a, b)| a * b).sum()
    })
}

/// `Σ_n (∂F/∂x_n ∂G/∂ψ_n - ∂F/∂ψ_n ∂G/∂x_n)` by central differences.
pub fn bracket1<F, G>(f: F, g: G, s: &CostateState, h: f64) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64,
    G: Fn(&[f64], &[f64]) -> f64,
{
    let n = s.dim();
    let y = s.to_concatenated();
    let df = gradient_fd(|y: &[f64]| f(&y[..n], &y[n..]), &y, h)?;
    let dg = gradient_fd(|y: &[f64]| g(&y[..n], &y[n..]), &y, h)?;
    Ok((0..n)
        .map(|k| df[k] * dg[n + k] - df[n + k] * dg[k])
        .sum())
}

type TensorFn = dyn Fn(&[f64]) -> AntisymmetricTensor + Send + Sync;

/// A position-dependent antisymmetric coefficient field `A_{k1…kn}(x)`.
#[derive(Clone)]
pub struct AntisymmetricTensorField {
    order: usize,
    dim: usize,
    coeffs: Arc<TensorFn>,
}

impl fmt::Debug for AntisymmetricTensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AntisymmetricTensorField")
            .field("order", &self.order)
            .field("dim", &self.dim)
            .finish()
    }
}

impl AntisymmetricTensorField {
    pub fn new<F>(order: usize, dim: usize, coeffs: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> AntisymmetricTensor + Send + Sync + 'static,
    {
        if order == 0 || order > dim {
            return Err(Error::DegenerateOrder { order, dim });
        }
        Ok(Self {
            order,
            dim,
            coeffs: Arc::new(coeffs),
        })
    }

    /// Order-1 field from a map returning its `dim` components.
    pub fn from_components<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            order: 1,
            dim,
            coeffs: Arc::new(move |x| AntisymmetricTensor::from_vector(&f(x))),
        }
    }

    /// The order-1 field `A_k = v_k`.
    pub fn from_vector_field(v: &VectorField) -> Self {
        let v = v.clone();
        Self::from_components(v.dim(), move |x| v.eval(x))
    }

    pub fn constant(t: AntisymmetricTensor) -> Self {
        Self {
            order: t.order(),
            dim: t.dim(),
            coeffs: Arc::new(move |_| t.clone()),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> AntisymmetricTensor {
        let t = (self.coeffs)(x);
        debug_assert_eq!((t.order(), t.dim()), (self.order, self.dim));
        t
    }
}

/// Transport derivative of `A` along `v`:
///
/// ```text
/// A_{k1…kn,k} v_k - A_{k k2…kn} v_{k1,k} - … - A_{k1…k(n-1) k} v_{kn,k}
/// ```
///
/// with every derivative taken by central differences of step `h`. The term
/// `Σ_n A_{…}(x) ψ…` is an integral of the extended flow iff this vanishes.
pub fn mbky_residual(
    a: &AntisymmetricTensorField,
    v: &VectorField,
    x: &[f64],
    h: f64,
) -> Result<AntisymmetricTensor> {
    if a.dim() != v.dim() {
        return Err(Error::Dimension {
            expected: v.dim(),
            got: a.dim(),
        });
    }
    if x.len() != v.dim() {
        return Err(Error::Dimension {
            expected: v.dim(),
            got: x.len(),
        });
    }
    let n = v.dim();
    let vel = v.eval(x);
    let jac = jacobian_fd(v, x, h)?;
    let at_x = a.eval(x);
    // ∂_k A_K for every canonical component K, as a (components × n) matrix
    let dadx = jacobian_fd_map(
        |p| a.eval(p).components().to_vec(),
        at_x.components().len(),
        x,
        h,
    )?;

    let mut out = AntisymmetricTensor::zeros(a.order(), n)?;
    let mut shifted = vec![0usize; a.order()];
    for (pos, idx) in at_x.canonical_indices().iter().enumerate() {
        let advect: f64 = (0..n).map(|k| dadx[(pos, k)] * vel[k]).sum();
        let mut stretch = 0.0;
        for slot in 0..idx.len() {
            shifted.copy_from_slice(idx);
            for k in 0..n {
                shifted[slot] = k;
                stretch += at_x.get(&shifted) * jac[(idx[slot], k)];
            }
        }
        out.set(idx, advect - stretch);
    }
    Ok(out)
}

/// Complete antisymmetrization of a product of covectors, normalized by `1/M!`.
pub fn wedge_covectors(factors: &[Vec<f64>]) -> Result<AntisymmetricTensor> {
    let m = factors.len();
    let dim = factors.first().map_or(0, Vec::len);
    if let Some(bad) = factors.iter().find(|f| f.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: bad.len(),
        });
    }
    let mut out = AntisymmetricTensor::zeros(m, dim)?;
    let perms = signed_permutations(m);
    let norm = 1.0 / factorial(m) as f64;
    for idx in out.canonical_indices() {
        let sum: f64 = perms
            .iter()
            .map(|(p, sign)| {
                f64::from(*sign) * (0..m).map(|i| factors[i][idx[p[i]]]).product::<f64>()
            })
            .sum();
        out.set(&idx, norm * sum);
    }
    Ok(out)
}

/// Reducible higher-order tensor field built from order-1 factors.
pub fn wedge(factors: &[AntisymmetricTensorField]) -> Result<AntisymmetricTensorField> {
    let Some(first) = factors.first() else {
        return Err(Error::DegenerateOrder { order: 0, dim: 0 });
    };
    let dim = first.dim();
    for f in factors {
        if f.order() != 1 {
            return Err(Error::Shape(format!(
                "wedge factors must be order 1, got order {}",
                f.order()
            )));
        }
        if f.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: f.dim(),
            });
        }
    }
    if factors.len() > dim {
        return Err(Error::DegenerateOrder {
            order: factors.len(),
            dim,
        });
    }
    let factors = factors.to_vec();
    AntisymmetricTensorField::new(factors.len(), dim, move |x| {
        let covectors: Vec<Vec<f64>> = factors
            .iter()
            .map(|f| f.eval(x).components().to_vec())
            .collect();
        wedge_covectors(&covectors).expect("factor shapes validated at construction")
    })
}

type OneFormFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A covector field `f_n(x)`, the kinetic part of a first-order Lagrangian.
#[derive(Clone)]
pub struct OneForm {
    dim: usize,
    eval: Arc<OneFormFn>,
}

impl fmt::Debug for OneForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OneForm").field("dim", &self.dim).finish()
    }
}

impl OneForm {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            eval: Arc::new(eval),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }
}

/// The one-form of the extended system in the variables `y¹_n = x_n`,
/// `y²_n = ψ_n`, laid out as `[x, ψ]`.
///
/// `f¹_n = ψ_n / 2`, `f²_n = -x_n / 2`, i.e. the antisymmetrized form of
/// `(ẋ_n - v_n) ψ_n`. Its Poisson matrix is `{y^a_n, y^b_m} = ε_ab δ_nm`
/// with `ε_12 = +1`.
pub fn y_variable_one_form(n: usize) -> OneForm {
    OneForm::new(2 * n, move |y| {
        let (x, psi) = y.split_at(n);
        psi.iter()
            .map(|p| 0.5 * p)
            .chain(x.iter().map(|xi| -0.5 * xi))
            .collect()
    })
}

/// `H(y) = v_n(y¹) y²_n` on the `[x, ψ]` layout.
pub fn y_variable_hamiltonian(v: &VectorField) -> impl Fn(&[f64]) -> f64 + Send + Sync + 'static {
    let v = v.clone();
    move |y| {
        let n = v.dim();
        v.eval(&y[..n]).iter().zip(&y[n..]).map(|(a, b)| a * b).sum()
    }
}

/// Structure matrix `f_mn = ∂_m f_n - ∂_n f_m` by central differences,
/// together with the Jacobian scale used for the singularity test.
fn structure(f: &OneForm, x: &[f64], h: f64) -> Result<(DMatrix<f64>, f64)> {
    if x.len() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: x.len(),
        });
    }
    let jac = jacobian_fd_map(|p| f.eval(p), f.dim(), x, h)?;
    Ok((jac.transpose() - &jac, jac.amax()))
}

/// The structure matrix `f_mn` of the one-form at `x`.
pub fn fj_structure(f: &OneForm, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    structure(f, x, h).map(|(s, _)| s)
}

/// Fundamental brackets `{x_n, x_m} = (f⁻¹)_nm`.
///
/// Fails with [`Error::SingularStructure`] when
/// `|det f| <= 1e-12 · (max |∂_m f_n|)^N`.
pub fn fj_bracket(f: &OneForm, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let (s, scale) = structure(f, x, h)?;
    let n = s.nrows();
    let lu = s.lu();
    let det = lu.determinant();
    let threshold = SINGULAR_STRUCTURE_TOLERANCE * scale.powi(n as i32);
    if !(det.abs() > threshold) || scale == 0.0 {
        return Err(Error::SingularStructure { det });
    }
    lu.try_inverse().ok_or(Error::SingularStructure { det })
}

/// `ẋ_n = (f⁻¹)_nm ∂H/∂x_m`.
pub fn fj_flow<H>(f: &OneForm, hamiltonian: H, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    H: Fn(&[f64]) -> f64,
{
    let bracket = fj_bracket(f, x, h)?;
    let grad = DVector::from_vec(gradient_fd(hamiltonian, x, h)?);
    Ok((bracket * grad).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::DEFAULT_FD_STEP;

    const H: f64 = DEFAULT_FD_STEP;

    fn state(x: &[f64], psi: &[f64]) -> CostateState {
        CostateState::new(x.to_vec(), psi.to_vec()).unwrap()
    }

    #[test]
    fn extended_rotation_velocity() {
        let s = state(&[1.0, 0.0], &[0.0, 1.0]);
        let vel = extended_velocity(&VectorField::rotation(), &s).unwrap();
        assert_eq!(vel.x, vec![0.0, -1.0]);
        assert_eq!(vel.psi, vec![1.0, 0.0]);
        let via_field = extend(&VectorField::rotation()).eval(&s.to_concatenated());
        assert_eq!(via_field, vec![0.0, -1.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_field_extension_is_still() {
        let out = extend(&VectorField::zero(3)).eval(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(out.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn h1_values() {
        let rot = VectorField::rotation();
        assert_eq!(h1(&rot, &state(&[1.0, 0.0], &[0.0, 1.0])).unwrap(), -1.0);
        assert_eq!(h1(&rot, &state(&[0.3, 0.4], &[0.0, 0.0])).unwrap(), 0.0);
        let x = [0.3, -1.2];
        let v = rot.eval(&x);
        let sq: f64 = v.iter().map(|c| c * c).sum();
        assert_eq!(h1(&rot, &state(&x, &v)).unwrap(), sq);
        assert!(h1(&rot, &state(&[1.0], &[1.0])).is_err());
    }

    #[test]
    fn bracket1_examples() {
        let s = state(&[1.0, 2.0], &[3.0, 4.0]);
        let canonical = bracket1(|x, _| x[0], |_, p| p[0], &s, H).unwrap();
        assert!((canonical - 1.0).abs() < 1e-10);
        let f = |x: &[f64], p: &[f64]| x[0] * p[1] + x[1] * x[1];
        assert!(bracket1(f, f, &s, H).unwrap().abs() < 1e-12);
        // ∂F/∂x1 ∂G/∂ψ1 - ∂F/∂ψ2 ∂G/∂x2 = ψ2 x2 - x1 ψ1 = 8 - 3
        let mixed = bracket1(|x, p| x[0] * p[1], |x, p| x[1] * p[0], &s, H).unwrap();
        assert!((mixed - 5.0).abs() < 1e-8, "{mixed}");
    }

    #[test]
    fn constant_tensor_is_transport_free_under_constant_field() {
        let v = VectorField::new(3, |_| vec![0.5, -1.0, 2.0]);
        let mut t = AntisymmetricTensor::zeros(2, 3).unwrap();
        t.set(&[0, 1], 1.0);
        t.set(&[1, 2], -3.0);
        let a = AntisymmetricTensorField::constant(t);
        let r = mbky_residual(&a, &v, &[0.1, 0.2, 0.3], H).unwrap();
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn field_is_its_own_invariant() {
        let v = VectorField::rotation();
        let a = AntisymmetricTensorField::from_vector_field(&v);
        let r = mbky_residual(&a, &v, &[0.4, -0.9], H).unwrap();
        assert!(r.max_abs() <= 1e-6);
    }

    #[test]
    fn residual_dimension_mismatch() {
        let a = AntisymmetricTensorField::constant(AntisymmetricTensor::from_vector(&[1.0, 0.0, 0.0]));
        assert!(matches!(
            mbky_residual(&a, &VectorField::rotation(), &[0.0, 0.0], H),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            AntisymmetricTensorField::new(3, 2, |_| unreachable!()),
            Err(Error::DegenerateOrder { order: 3, dim: 2 })
        ));
    }

    #[test]
    fn wedge_examples() {
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.0, 1.0, 0.0];
        let ab = wedge_covectors(&[a.clone(), b]).unwrap();
        assert_eq!(ab.get(&[0, 1]), 0.5);
        assert_eq!(ab.get(&[1, 0]), -0.5);
        assert_eq!(ab.get(&[0, 2]), 0.0);
        assert_eq!(ab.get(&[1, 2]), 0.0);
        let aa = wedge_covectors(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(aa.max_abs(), 0.0);
        assert!(matches!(
            wedge_covectors(&[a.clone(), a.clone(), a.clone(), a]),
            Err(Error::DegenerateOrder { order: 4, dim: 3 })
        ));
    }

    #[test]
    fn fj_bracket_of_simple_form() {
        let f = OneForm::new(2, |x| vec![0.0, x[0]]);
        let s = fj_structure(&f, &[0.3, 0.7], H).unwrap();
        assert!((s[(0, 1)] - 1.0).abs() < 1e-10);
        let b = fj_bracket(&f, &[0.3, 0.7], H).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((b - expected).amax() < 1e-9);
    }

    #[test]
    fn fj_closed_form_is_singular() {
        // f = ∇φ with φ = x1² x2 + sin(x2)
        let f = OneForm::new(2, |x| vec![2.0 * x[0] * x[1], x[0] * x[0] + x[1].cos()]);
        assert!(matches!(
            fj_bracket(&f, &[0.8, -0.3], H),
            Err(Error::SingularStructure { .. })
        ));
    }

    #[test]
    fn fj_flow_examples() {
        let f = OneForm::new(2, |x| vec![0.0, x[0]]);
        let x = [0.6, -0.2];
        let v = fj_flow(&f, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]), &x, H).unwrap();
        // structure [[0,1],[-1,0]] inverts to [[0,-1],[1,0]]
        assert!((v[0] + x[1]).abs() < 1e-9 && (v[1] - x[0]).abs() < 1e-9);
        let still = fj_flow(&f, |_| 4.0, &x, H).unwrap();
        assert!(still.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn y_variable_bracket_is_epsilon() {
        let f = y_variable_one_form(2);
        let b = fj_bracket(&f, &[0.1, 0.2, 0.3, 0.4], H).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        for n in 0..2 {
            expected[(n, 2 + n)] = 1.0;
            expected[(2 + n, n)] = -1.0;
        }
        assert!((b - expected).amax() <= 1e-9);
    }

    #[test]
    fn literal_transcription_reverses_time() {
        // f^a_n = ½ y^b_n ε^{ba}: structure ε, bracket -ε, so ẋ = -v
        let f = OneForm::new(2, |y| vec![-0.5 * y[1], 0.5 * y[0]]);
        let b = fj_bracket(&f, &[0.5, 0.5], H).unwrap();
        assert!((b[(0, 1)] + 1.0).abs() < 1e-9);
    }
}
