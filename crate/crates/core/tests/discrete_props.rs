mod common;

use num_rational::BigRational;
use proptest::prelude::*;
use rand::Rng;

use nambu_core::discrete::{
    cat_map, coherence_check, costate_step, costate_step_with, cubic_shear, discrete_hamiltonian,
    duality_pairings, fan_out, linear_map, rational, reversibility, CostateConvention,
    DiscreteSystem, ExtendedDiscreteState, Matrix, REVERSIBILITY_TOLERANCE,
};
use nambu_core::flows::DEFAULT_FD_STEP;
use nambu_core::nambu::NambuSystem;

fn well_conditioned(n: usize) -> impl Strategy<Value = Matrix<f64>> {
    proptest::collection::vec(-0.15..0.15f64, n * n).prop_map(move |v| {
        (0..n)
            .map(|r| (0..n).map(|c| v[r * n + c] + if r == c { 1.0 } else { 0.0 }).collect())
            .collect()
    })
}

fn spread(p: &[f64]) -> f64 {
    p.iter().map(|x| (x - p[0]).abs()).fold(0.0, f64::max) / p[0].abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairing_is_invariant_for_linear_maps(
        m in well_conditioned(3),
        s0 in proptest::collection::vec(-1.0..1.0f64, 3),
        l0 in proptest::collection::vec(-1.0..1.0f64, 3),
        ds0 in proptest::collection::vec(-1.0..1.0f64, 3),
    ) {
        let p0: f64 = l0.iter().zip(&ds0).map(|(a, b)| a * b).sum();
        prop_assume!(p0.abs() > 1e-2);
        let sys = linear_map(m);
        for convention in [CostateConvention::NextState, CostateConvention::CurrentState] {
            let pairings = duality_pairings(&sys, &s0, &l0, &ds0, 30, convention).unwrap();
            prop_assert!(spread(&pairings) <= 1e-6, "{:?}", pairings);
        }
    }

    #[test]
    fn pairing_is_invariant_for_nonlinear_maps(
        s0 in proptest::collection::vec(-1.0..1.0f64, 2),
        l0 in proptest::collection::vec(-1.0..1.0f64, 2),
        ds0 in proptest::collection::vec(-1e-2..1e-2f64, 2),
    ) {
        // a shear composed with a rotation-like mixing step; M varies along the orbit
        let sys = DiscreteSystem::new(2, |s: &[f64]| {
            let a = s[0] + 0.3 * s[1].sin();
            vec![a, s[1] + 0.2 * a.cos()]
        });
        let p0 = l0[0] * ds0[0] + l0[1] * ds0[1];
        prop_assume!(p0.abs() > 1e-5);
        let pairings = duality_pairings(&sys, &s0, &l0, &ds0, 50, CostateConvention::CurrentState).unwrap();
        prop_assert!(spread(&pairings) <= 1e-6, "{:?}", pairings);
    }

    #[test]
    fn costate_update_is_linear_exactly(
        s in proptest::collection::vec(-20i64..20, 2),
        l1 in proptest::collection::vec(-20i64..20, 2),
        l2 in proptest::collection::vec(-20i64..20, 2),
        alpha in -9i64..9, beta in -9i64..9,
        entries in proptest::collection::vec(-5i64..5, 4),
    ) {
        let m: Matrix<BigRational> = vec![
            vec![rational(entries[0]), rational(entries[1])],
            vec![rational(entries[2]), rational(entries[3])],
        ];
        prop_assume!(entries[0] * entries[3] != entries[1] * entries[2]);
        let sys = linear_map(m);
        let r = |v: &[i64]| v.iter().map(|x| rational(*x) / rational(7)).collect::<Vec<_>>();
        let (s, l1, l2) = (r(&s), r(&l1), r(&l2));
        let combo: Vec<BigRational> = l1.iter().zip(&l2)
            .map(|(a, b)| rational(alpha) * a + rational(beta) * b)
            .collect();
        let step = |l: Vec<BigRational>| costate_step(&sys, &ExtendedDiscreteState::new(s.clone(), l).unwrap()).unwrap().l;
        let (c, a, b) = (step(combo), step(l1), step(l2));
        for i in 0..2 {
            prop_assert_eq!(c[i].clone(), rational(alpha) * &a[i] + rational(beta) * &b[i]);
        }
    }

    #[test]
    fn inverse_steps_undo_steps(s in proptest::collection::vec(-3.0..3.0f64, 2), t in proptest::collection::vec(0.0..1.0f64, 2)) {
        let shear = cubic_shear::<f64>();
        let back = shear.inverse_step(&shear.step(&s)).unwrap();
        prop_assert!((back[0] - s[0]).abs() <= 1e-9 && (back[1] - s[1]).abs() <= 1e-9);
        let cat = cat_map::<f64>();
        let back = cat.inverse_step(&cat.step(&t)).unwrap();
        for i in 0..2 {
            let d = (back[i] - t[i]).abs();
            prop_assert!(d.min(1.0 - d) <= 1e-9);
        }
    }
}

/// l(k+1) from an explicit 2×2 inverse of a hand-rolled difference Jacobian.
fn brute_force_costates(sys: &DiscreteSystem, s0: &[f64], l0: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let mut s = s0.to_vec();
    let mut l = l0.to_vec();
    let mut out = vec![l.clone()];
    for _ in 0..steps {
        s = sys.step(&s);
        let mut m = [[0.0; 2]; 2];
        for col in 0..2 {
            for row in 0..2 {
                m[row][col] = common::partial(|p: &[f64]| sys.step(p)[row], &s, col, DEFAULT_FD_STEP);
            }
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        l = vec![l[0] * inv[0][0] + l[1] * inv[1][0], l[0] * inv[0][1] + l[1] * inv[1][1]];
        out.push(l.clone());
    }
    out
}

#[test]
fn shear_costate_matches_brute_force() {
    let shear = cubic_shear::<f64>();
    let want = brute_force_costates(&shear, &[0.2, -0.9], &[0.7, 1.3], 25);
    let mut es = ExtendedDiscreteState::new(vec![0.2, -0.9], vec![0.7, 1.3]).unwrap();
    for w in &want[1..] {
        es = costate_step(&shear, &es).unwrap();
        for i in 0..2 {
            assert!((es.l[i] - w[i]).abs() <= 1e-6 * w[i].abs().max(1.0), "{:?} vs {w:?}", es.l);
        }
    }
}

#[test]
fn conventions_differ_only_in_evaluation_point() {
    // with M constant along the orbit both conventions coincide
    let cat = cat_map::<f64>();
    let es = ExtendedDiscreteState::new(vec![0.1, 0.7], vec![1.0, 2.0]).unwrap();
    assert_eq!(
        costate_step_with(&cat, &es, CostateConvention::NextState).unwrap(),
        costate_step_with(&cat, &es, CostateConvention::CurrentState).unwrap()
    );
    let sys = DiscreteSystem::new(1, |s: &[f64]| vec![s[0] + s[0] * s[0]]);
    let es = ExtendedDiscreteState::new(vec![0.5], vec![1.0]).unwrap();
    let next = costate_step_with(&sys, &es, CostateConvention::NextState).unwrap();
    let current = costate_step_with(&sys, &es, CostateConvention::CurrentState).unwrap();
    // M = 1 + 2S at S = 0.75 and at S = 0.5
    assert!((next.l[0] - 1.0 / 2.5).abs() < 1e-9);
    assert!((current.l[0] - 1.0 / 2.0).abs() < 1e-9);
}

#[test]
fn cat_orbit_hamiltonian_matches_double_loop() {
    let cat = cat_map::<f64>();
    let orbit = cat.orbit(&[0.13, 0.58], 40);
    let mut rng = common::rng(51);
    let costates: Vec<Vec<f64>> = (0..orbit.len()).map(|_| common::uniform_point(&mut rng, 2, -1.0, 1.0)).collect();
    let mut naive = 0.0;
    for k in 0..orbit.len() {
        let phi = cat.step(&orbit[k]);
        for n in 0..2 {
            naive += costates[k][n] * phi[n];
        }
    }
    assert_eq!(discrete_hamiltonian(&cat, &orbit, &costates).unwrap(), naive);
}

#[test]
fn reversibility_matches_available_inverses() {
    let maps: [(&str, DiscreteSystem); 3] = [
        ("cat", cat_map()),
        ("shear", cubic_shear()),
        ("fan-out", fan_out()),
    ];
    let mut rng = common::rng(52);
    for (name, sys) in &maps {
        for _ in 0..10 {
            let s = common::uniform_point(&mut rng, 2, 0.0, 1.0);
            let r = reversibility(sys, &s, REVERSIBILITY_TOLERANCE).unwrap();
            assert_eq!(r.is_reversible(), sys.has_inverse(), "{name} at {s:?}");
        }
    }
}

#[test]
fn divergence_free_fields_pass_the_coherence_check() {
    let mut rng = common::rng(53);
    let taus = [1e-2, 5e-3, 2.5e-3];
    for i in 0..10 {
        let (n, p) = if i % 2 == 0 { (2, 1) } else { (3, 2) };
        let hams = (0..p)
            .map(|_| common::random_polynomial(&mut rng, n, 4, 3).into_hamiltonian())
            .collect();
        let sys = NambuSystem::new(n, hams, rng.gen_range(0.5..2.0)).unwrap();
        let x = common::uniform_point(&mut rng, n, -1.0, 1.0);
        let rep = coherence_check(&sys.vector_field(), &x, &taus).unwrap();
        assert!(rep.first_order_estimate.abs() <= 1e-6, "{rep:?}");
    }
}

#[test]
fn coherence_sees_first_order_term_of_compressible_field() {
    let v = nambu_core::VectorField::new(2, |x| vec![-x[0] + x[1] * x[1], 0.5 * x[1]]);
    let rep = coherence_check(&v, &[0.2, 0.3], &[1e-2, 5e-3, 2.5e-3]).unwrap();
    assert!((rep.divergence + 0.5).abs() < 1e-9);
    assert!((rep.first_order_estimate + 0.5).abs() < 1e-9);
    let order = rep.residual_order.unwrap();
    assert!((1.8..=2.2).contains(&order));
}
