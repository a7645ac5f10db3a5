mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use nambu_core::costate::{
    bracket1, extend, extend_with_tangent, fj_bracket, fj_structure, h1_monitor, mbky_residual,
    wedge, wedge_covectors, AntisymmetricTensorField, CostateState, OneForm,
};
use nambu_core::flows::{integrate, jacobian_fd, DEFAULT_FD_STEP};
use nambu_core::tensor::{factorial, AntisymmetricTensor};
use nambu_core::vortex::vortex_field;
use nambu_core::{IntegratorConfig, VectorField};

fn matrix(n: usize, range: f64) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-range..range, n * n).prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
}

/// Transport residual from the unstructured definition, looping over every
/// index tuple of a dense tensor.
fn dense_residual(a: &AntisymmetricTensorField, v: &VectorField, x: &[f64], h: f64) -> Vec<(Vec<usize>, f64)> {
    let n = v.dim();
    let order = a.order();
    let vel = v.eval(x);
    let mut out = Vec::new();
    for idx in common::all_tuples(order, n) {
        let mut total = 0.0;
        for k in 0..n {
            let comp = |p: &[f64]| a.eval(p).get(&idx);
            total += common::partial(comp, x, k, h) * vel[k];
        }
        for slot in 0..order {
            for k in 0..n {
                let mut shifted = idx.clone();
                shifted[slot] = k;
                let dv = common::partial(|p: &[f64]| v.eval(p)[idx[slot]], x, k, h);
                total -= a.eval(x).get(&shifted) * dv;
            }
        }
        out.push((idx, total));
    }
    out
}

fn order2_field() -> AntisymmetricTensorField {
    AntisymmetricTensorField::new(2, 3, |x| {
        let mut t = AntisymmetricTensor::zeros(2, 3).unwrap();
        t.set(&[0, 1], x[2] * x[0]);
        t.set(&[0, 2], x[1].sin());
        t.set(&[2, 1], 1.0 + x[0] * x[1]);
        t
    })
    .unwrap()
}

#[test]
fn residual_matches_dense_loop() {
    let rot = VectorField::rotation();
    let constant = AntisymmetricTensorField::from_components(2, |_| vec![1.0, 0.0]);
    let nonlinear = VectorField::new(3, |x| vec![x[1] * x[2], x[0] - x[2] * x[2], x[0].cos()]);
    let vector = AntisymmetricTensorField::from_components(3, |x| vec![x[0] * x[1], x[2], -x[1]]);
    let cases = [
        (constant, rot.clone(), vec![0.3, -0.7]),
        (vector, nonlinear.clone(), vec![0.4, 1.1, -0.6]),
        (order2_field(), nonlinear, vec![-0.5, 0.2, 0.9]),
    ];
    for (a, v, x) in &cases {
        let fast = mbky_residual(a, v, x, DEFAULT_FD_STEP).unwrap();
        for (idx, want) in dense_residual(a, v, x, DEFAULT_FD_STEP) {
            assert!((fast.get(&idx) - want).abs() < 1e-8, "{idx:?}: {} vs {want}", fast.get(&idx));
        }
    }
    // rotation with A = (1, 0): residual (0, 1) by hand
    let r = mbky_residual(&cases[0].0, &rot, &[0.3, -0.7], DEFAULT_FD_STEP).unwrap();
    assert!(r.get(&[0]).abs() < 1e-10 && (r.get(&[1]) - 1.0).abs() < 1e-10);
}

#[test]
fn extended_linear_costate_matches_exponential() {
    let mut rng = common::rng(21);
    for _ in 0..5 {
        let a = DMatrix::from_fn(3, 3, |_, _| rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let x0 = common::uniform_point(&mut rng, 3, -1.0, 1.0);
        let psi0 = common::uniform_point(&mut rng, 3, -1.0, 1.0);
        let start: Vec<f64> = x0.iter().chain(&psi0).copied().collect();
        let traj = integrate(&extend(&VectorField::linear(a.clone())), &start, &IntegratorConfig::rk4(1e-3, 1.0), &[]).unwrap();
        let end = traj.final_state().unwrap();
        let want_psi = common::expm(&(-a.transpose())) * DVector::from_vec(psi0);
        let want_x = common::expm(&a) * DVector::from_vec(x0);
        for i in 0..3 {
            assert!((end[3 + i] - want_psi[i]).abs() < 1e-6);
            assert!((end[i] - want_x[i]).abs() < 1e-6);
        }
    }
}

#[test]
fn first_level_hamiltonian_is_conserved() {
    let cases = [
        (VectorField::rotation(), vec![1.0, 0.2, -0.4, 0.9]),
        (vortex_field(&[1.0, 1.0]), vec![1.0, 0.0, -1.0, 0.0, 0.3, 0.1, -0.2, 0.6]),
    ];
    for (v, start) in &cases {
        let traj = integrate(&extend(v), start, &IntegratorConfig::rk4(1e-3, 10.0), &[h1_monitor(v)]).unwrap();
        let d = traj.drift("H1").unwrap();
        assert!(d.max_drift_abs <= 1e-7 * d.initial.abs().max(1.0), "{d:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_pairing_is_invariant(
        a in matrix(3, 1.0),
        start in proptest::collection::vec(-1.0..1.0f64, 9),
    ) {
        let v = VectorField::linear(a);
        let traj = integrate(&extend_with_tangent(&v), &start, &IntegratorConfig::rk4(1e-2, 2.0), &[]).unwrap();
        let pairing = |y: &[f64]| (0..3).map(|i| y[3 + i] * y[6 + i]).sum::<f64>();
        let p0 = pairing(&start);
        for y in &traj.states {
            prop_assert!((pairing(y) - p0).abs() <= 1e-8 * p0.abs().max(1.0));
        }
    }

    #[test]
    fn bracket1_is_antisymmetric(
        cf in proptest::collection::vec(-2.0..2.0f64, 4),
        cg in proptest::collection::vec(-2.0..2.0f64, 4),
        y in proptest::collection::vec(-1.5..1.5f64, 4),
    ) {
        let f = move |x: &[f64], p: &[f64]| cf[0] * x[0] * p[1] + cf[1] * x[1] * x[1] + cf[2] * p[0] * p[0] * x[0] + cf[3] * p[1];
        let g = move |x: &[f64], p: &[f64]| cg[0] * x[1] * p[0] + cg[1] * x[0] * x[0] * x[1] + cg[2] * p[1] * p[0] + cg[3] * x[0];
        let s = CostateState::new(y[..2].to_vec(), y[2..].to_vec()).unwrap();
        let fg = bracket1(&f, &g, &s, DEFAULT_FD_STEP).unwrap();
        let gf = bracket1(&g, &f, &s, DEFAULT_FD_STEP).unwrap();
        prop_assert!((fg + gf).abs() <= 1e-9);
    }

    #[test]
    fn wedge_of_invariants_is_invariant(a in matrix(3, 1.0), x in proptest::collection::vec(-2.0..2.0f64, 3)) {
        let lin = VectorField::linear(a);
        let first = AntisymmetricTensorField::from_vector_field(&lin);
        let second = AntisymmetricTensorField::from_components(3, |x| x.to_vec());
        let factors = mbky_residual(&first, &lin, &x, DEFAULT_FD_STEP).unwrap().max_abs()
            .max(mbky_residual(&second, &lin, &x, DEFAULT_FD_STEP).unwrap().max_abs());
        prop_assume!(factors <= 1e-6);
        let both = wedge(&[first, second]).unwrap();
        prop_assert!(mbky_residual(&both, &lin, &x, DEFAULT_FD_STEP).unwrap().max_abs() <= 1e-6);
    }

    #[test]
    fn full_wedge_is_scaled_determinant(
        rows in (1usize..6).prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(-2.0..2.0f64, n), n))
    ) {
        let n = rows.len();
        let t = wedge_covectors(&rows).unwrap();
        prop_assert_eq!(t.components().len(), 1);
        let idx: Vec<usize> = (0..n).collect();
        let want = common::det_cofactor(&rows) / factorial(n) as f64;
        prop_assert!((t.get(&idx) - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn storage_is_antisymmetric(
        values in proptest::collection::vec(-5.0..5.0f64, 10),
        i in 0usize..3, j in 0usize..3,
    ) {
        // order 3 in dim 5 has ten components
        let mut t = AntisymmetricTensor::zeros(3, 5).unwrap();
        for (idx, v) in t.canonical_indices().into_iter().zip(&values) {
            t.set(&idx, *v);
        }
        prop_assume!(i != j);
        for idx in t.canonical_indices() {
            let mut swapped = idx.clone();
            swapped.swap(i, j);
            prop_assert_eq!(t.get(&swapped), -t.get(&idx));
        }
    }

    #[test]
    fn fj_bracket_inverts_structure(
        upper in proptest::collection::vec(-2.0..2.0f64, 6),
        c in -0.5..0.5f64,
        x in proptest::collection::vec(-1.0..1.0f64, 4),
    ) {
        // f = ½ Ω x plus a non-closed cubic term
        let mut omega = DMatrix::zeros(4, 4);
        let mut k = 0;
        for r in 0..4 {
            for s in (r + 1)..4 {
                omega[(r, s)] = upper[k];
                omega[(s, r)] = -upper[k];
                k += 1;
            }
        }
        let om = omega.clone();
        let form = OneForm::new(4, move |x| {
            let mut f: Vec<f64> = (0..4).map(|r| 0.5 * (0..4).map(|s| om[(r, s)] * x[s]).sum::<f64>()).collect();
            f[0] += c * x[1] * x[1] * x[2];
            f
        });
        let structure = fj_structure(&form, &x, DEFAULT_FD_STEP).unwrap();
        prop_assume!(structure.determinant().abs() > 1e-2);
        let b = fj_bracket(&form, &x, DEFAULT_FD_STEP).unwrap();
        prop_assert!((&b + b.transpose()).amax() <= 1e-9 * b.amax().max(1.0));
        prop_assert!((&b * &structure - DMatrix::identity(4, 4)).amax() <= 1e-9);
    }
}

#[test]
fn tangent_field_uses_linearization() {
    let v = VectorField::new(2, |x| vec![x[0] * x[1], x[0].sin()]);
    let ext = extend_with_tangent(&v);
    let y = [0.4, -0.3, 1.0, 2.0, 0.5, -1.5];
    let out = ext.eval(&y);
    let j = jacobian_fd(&v, &y[..2], DEFAULT_FD_STEP).unwrap();
    let dx = &j * DVector::from_column_slice(&y[4..]);
    assert!((out[4] - dx[0]).abs() < 1e-12 && (out[5] - dx[1]).abs() < 1e-12);
}
