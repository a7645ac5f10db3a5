use clap::ValueEnum;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nambu_core::costate::{extend_with_tangent, h1_monitor};
use nambu_core::discrete::{
    cat_map, coherence_check, duality_pairings, fan_out, rational, reversibility, CostateConvention,
    REVERSIBILITY_TOLERANCE,
};
use nambu_core::flows::{divergence_fd, integrate, Monitor, DEFAULT_FD_STEP};
use nambu_core::nambu::{Monomial, NambuSystem, Polynomial};
use nambu_core::qmcheck::{convergence, stationarity_residual, RadialGrid};
use nambu_core::vortex::{
    reduced_field, reduced_monitors, reduced_nambu_system, vortex_field, vortex_monitors,
    VortexConfiguration,
};
use nambu_core::{IntegratorConfig, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    All,
    Flows,
    Costate,
    Nambu,
    Vortex,
    Discrete,
    Qmcheck,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn bound(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            detail: format!("{value:.3e} (limit {limit:.1e})"),
        }
    }

    fn holds(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        Self::holds(name, false, format!("error: {err}"))
    }
}

pub fn run_suite(suite: Suite) -> Vec<Check> {
    let groups: &[fn() -> Vec<Check>] = match suite {
        Suite::All => &[flows, costate, nambu, vortex, discrete, qmcheck],
        Suite::Flows => &[flows],
        Suite::Costate => &[costate],
        Suite::Nambu => &[nambu],
        Suite::Vortex => &[vortex],
        Suite::Discrete => &[discrete],
        Suite::Qmcheck => &[qmcheck],
    };
    groups.iter().flat_map(|g| g()).collect()
}

fn max_drift(v: &VectorField, x0: &[f64], cfg: &IntegratorConfig, monitors: &[Monitor]) -> Result<f64, String> {
    let traj = integrate(v, x0, cfg, monitors).map_err(|e| e.to_string())?;
    Ok(traj
        .drifts()
        .iter()
        .map(|d| d.max_drift_rel)
        .fold(0.0, f64::max))
}

fn drift_check(name: &str, v: &VectorField, x0: &[f64], cfg: IntegratorConfig, monitors: &[Monitor], limit: f64) -> Check {
    match max_drift(v, x0, &cfg, monitors) {
        Ok(d) => Check::bound(name, d, limit),
        Err(e) => Check::failed(name, e),
    }
}

fn flows() -> Vec<Check> {
    let circle = || vec![Monitor::new("r2", |x: &[f64]| x[0] * x[0] + x[1] * x[1])];
    let rot = VectorField::rotation();
    let period = std::f64::consts::TAU;
    let closure = match integrate(&rot, &[1.0, 0.0], &IntegratorConfig::rk4(period / 400.0, period), &[]) {
        Ok(t) => {
            let x = t.final_state().unwrap();
            Check::bound("flows: rk4 closes the circle", ((x[0] - 1.0).powi(2) + x[1].powi(2)).sqrt(), 1e-8)
        }
        Err(e) => Check::failed("flows: rk4 closes the circle", e),
    };
    vec![
        closure,
        drift_check(
            "flows: midpoint keeps the radius",
            &rot,
            &[0.3, -0.8],
            IntegratorConfig::midpoint(0.1, 50.0),
            &circle(),
            1e-11,
        ),
    ]
}

fn costate() -> Vec<Check> {
    let v = VectorField::new(2, |x| vec![x[1], -x[0].sin()]);
    let ext = extend_with_tangent(&v);
    let monitors = vec![
        h1_monitor(&v),
        Monitor::new("pairing", |y: &[f64]| y[2] * y[4] + y[3] * y[5]),
    ];
    vec![drift_check(
        "costate: H1 and pairing conserved",
        &ext,
        &[0.4, 0.1, 1.0, -0.5, 0.3, 0.7],
        IntegratorConfig::rk4(1e-2, 10.0),
        &monitors,
        1e-8,
    )]
}

fn quadratic(dim: usize, weights: &[f64]) -> Polynomial {
    Polynomial::new(
        weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut powers = vec![0; dim];
                powers[i] = 2;
                Monomial { coeff: *w, powers }
            })
            .collect(),
    )
}

fn nambu() -> Vec<Check> {
    let mut checks = Vec::new();
    let gammas = [1.0, 2.0, -0.5];
    let u = [0.1, -0.3, 0.2];
    match reduced_nambu_system(gammas) {
        Ok(sys) => {
            let a = sys.vector_field().eval(&u);
            let b = reduced_field(gammas).eval(&u);
            let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            checks.push(Check::bound("nambu: reduced three-vortex form", err, 1e-12));
        }
        Err(e) => checks.push(Check::failed("nambu: reduced three-vortex form", e)),
    }

    // Euler's rigid body: two quadratic integrals on R³
    let body = NambuSystem::new(
        3,
        vec![
            quadratic(3, &[0.5, 0.5, 0.5]).into_hamiltonian(),
            quadratic(3, &[0.5, 0.25, 1.0 / 6.0]).into_hamiltonian(),
        ],
        1.0,
    );
    match body {
        Ok(sys) => {
            let field = sys.vector_field();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                match divergence_fd(&field, &x, DEFAULT_FD_STEP) {
                    Ok(d) => worst = worst.max(d.abs()),
                    Err(_) => worst = f64::INFINITY,
                }
            }
            checks.push(Check::bound("nambu: flow is divergence-free", worst, 1e-8));
            checks.push(drift_check(
                "nambu: rigid body keeps both integrals",
                &field,
                &[1.0, 0.2, -0.4],
                IntegratorConfig::rk4(1e-2, 20.0),
                &sys.monitors(),
                1e-9,
            ));
        }
        Err(e) => checks.push(Check::failed("nambu: rigid body", e)),
    }
    checks
}

fn vortex() -> Vec<Check> {
    let gammas = [1.0, 2.0, -0.5];
    let state = [1.0, 0.0, -0.5, 0.6, 0.2, -1.1];
    let coincident = VortexConfiguration::new(
        vec![1.0, 1.0],
        vec![Complex64::new(0.5, 0.5), Complex64::new(0.5, 0.5)],
    );
    vec![
        drift_check(
            "vortex: H and impulse conserved",
            &vortex_field(&gammas),
            &state,
            IntegratorConfig::rk4(1e-3, 2.0),
            &vortex_monitors(&gammas),
            1e-8,
        ),
        drift_check(
            "vortex: reduced integrals conserved",
            &reduced_field(gammas),
            &[0.1, -0.3, 0.2],
            IntegratorConfig::rk4(1e-3, 2.0),
            &reduced_monitors(gammas),
            1e-8,
        ),
        Check::holds(
            "vortex: coincident vortices rejected",
            coincident.is_err(),
            coincident.err().map(|e| e.to_string()).unwrap_or_else(|| "accepted".into()),
        ),
    ]
}

fn discrete() -> Vec<Check> {
    let mut checks = Vec::new();
    let q = |n: i64, d: i64| rational(n) / rational(d);
    let pairings = duality_pairings(
        &cat_map::<BigRational>(),
        &[q(3, 8), q(13, 16)],
        &[rational(1), rational(-2)],
        &[q(1, 4), q(1, 2)],
        100,
        CostateConvention::NextState,
    );
    checks.push(match pairings {
        Ok(p) => Check::holds(
            "discrete: exact cat-map pairing constant",
            p.iter().all(|x| *x == p[0]),
            format!("{} pairings", p.len()),
        ),
        Err(e) => Check::failed("discrete: exact cat-map pairing constant", e),
    });
    checks.push(match reversibility(&fan_out::<f64>(), &[0.2, 0.4], REVERSIBILITY_TOLERANCE) {
        Ok(r) => Check::holds("discrete: fan-out map is irreversible", !r.is_reversible(), format!("det {}", r.det())),
        Err(e) => Check::failed("discrete: fan-out map is irreversible", e),
    });
    let rot = VectorField::rotation();
    checks.push(match coherence_check(&rot, &[0.3, 0.4], &[1e-2, 5e-3, 2.5e-3]) {
        Ok(r) => Check::bound("discrete: Euler step of a divergence-free field", r.first_order_estimate.abs(), 1e-6),
        Err(e) => Check::failed("discrete: Euler step of a divergence-free field", e),
    });
    checks
}

fn qmcheck() -> Vec<Check> {
    let mut checks = Vec::new();
    for d in [1, 2, 3, 5, 6] {
        let name = format!("qmcheck: second-order convergence, d = {d}");
        let result = RadialGrid::new(1.0, 2.0, 201, d).and_then(|g| convergence(&g, 3));
        checks.push(match result {
            Ok(c) => match c.order {
                Some(o) => Check::holds(&name, (1.8..=2.2).contains(&o), format!("order {o:.3}")),
                None => Check::holds(&name, false, "no order estimate"),
            },
            Err(e) => Check::failed(&name, e),
        });
    }
    let flat = RadialGrid::new(1.0, 2.0, 201, 4).and_then(|g| stationarity_residual(&g));
    checks.push(match flat {
        Ok(r) => Check::bound("qmcheck: d = 4 potential vanishes", r, 0.0),
        Err(e) => Check::failed("qmcheck: d = 4 potential vanishes", e),
    });
    checks
}
