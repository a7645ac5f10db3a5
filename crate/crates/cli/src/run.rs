use std::time::Instant;

use nalgebra::DMatrix;
use num_rational::BigRational;
use serde_json::json;

use nambu_core::costate::{extend, extend_with_tangent, h1_monitor};
use nambu_core::discrete::{
    cat_map, coherence_check, costate_step_with, cubic_shear, fan_out, reversibility,
    CostateConvention, DiscreteSystem, ExtendedDiscreteState, Scalar, REVERSIBILITY_TOLERANCE,
};
use nambu_core::flows::{integrate_partial, Drift, Monitor};
use nambu_core::nambu::NambuSystem;
use nambu_core::qmcheck::convergence;
use nambu_core::vortex::{
    reduced_field, reduced_monitors, reduced_nambu_system, vortex_field, vortex_monitors,
};
use nambu_core::{IntegratorConfig, VectorField};

use crate::config::{CostateField, Job, MapKind, NambuHamiltonians, SystemSpec};
use crate::error::CliError;
use crate::output::{numbered, DetCheck, Report, Table};

/// Everything a run produced, including what was recorded before a failure.
#[derive(Debug)]
pub struct RunOutput {
    pub table: Table,
    pub report: Report,
    pub failure: Option<CliError>,
}

impl RunOutput {
    fn fail(&mut self, err: CliError) {
        self.report.status = "error".into();
        self.report.error = Some(err.to_string());
        self.failure = Some(err);
    }
}

/// Runs the job and writes its outputs. Output files are written even when
/// the run fails part-way, so a partial trajectory is never lost.
pub fn run(job: &Job) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let mut out = execute(job);
    if job.outputs.timing {
        out.report.runtime_seconds = Some(start.elapsed().as_secs_f64());
    }
    if let Some(path) = &job.outputs.csv {
        out.table.write_csv(path)?;
    }
    if let Some(path) = &job.outputs.report {
        out.report.write(path)?;
    }
    Ok(out)
}

pub fn execute(job: &Job) -> RunOutput {
    let name = job.kind.name();
    match &job.spec {
        SystemSpec::Vortex { gammas, state } => {
            let mut header = Vec::new();
            for i in 1..=gammas.len() {
                header.push(format!("x{i}"));
                header.push(format!("y{i}"));
            }
            simulate(name, &vortex_field(gammas), state, job.integrator.as_ref().unwrap(), &vortex_monitors(gammas), header)
        }
        SystemSpec::Reduced3 { gammas, u } => simulate(
            name,
            &reduced_field(*gammas),
            u,
            job.integrator.as_ref().unwrap(),
            &reduced_monitors(*gammas),
            numbered("u", 3),
        ),
        SystemSpec::Nambu { hamiltonians, state } => {
            let sys = match hamiltonians {
                NambuHamiltonians::Polynomials { polys, weight } => NambuSystem::new(
                    state.len(),
                    polys.iter().cloned().map(|p| p.into_hamiltonian()).collect(),
                    *weight,
                ),
                NambuHamiltonians::Reduced3(g) => reduced_nambu_system(*g),
            };
            match sys {
                Ok(sys) => simulate(
                    name,
                    &sys.vector_field(),
                    state,
                    job.integrator.as_ref().unwrap(),
                    &sys.monitors(),
                    numbered("x", state.len()),
                ),
                Err(e) => failed(name, CliError::Usage(e.to_string())),
            }
        }
        SystemSpec::Costate {
            field,
            state,
            costate,
            tangent,
        } => {
            let v = match field {
                CostateField::Rotation => VectorField::rotation(),
                CostateField::Vortex(g) => vortex_field(g),
                CostateField::Linear(m) => {
                    let n = m.len();
                    VectorField::linear(DMatrix::from_row_iterator(n, n, m.iter().flatten().copied()))
                }
            };
            let n = v.dim();
            let mut header = numbered("x", n);
            header.extend(numbered("psi", n));
            let mut start: Vec<f64> = state.iter().chain(costate).copied().collect();
            let mut monitors = vec![h1_monitor(&v)];
            let ext = match tangent {
                Some(dx) => {
                    header.extend(numbered("dx", n));
                    start.extend(dx);
                    monitors.push(Monitor::new("pairing", move |y| {
                        (0..n).map(|i| y[n + i] * y[2 * n + i]).sum()
                    }));
                    extend_with_tangent(&v)
                }
                None => extend(&v),
            };
            simulate(name, &ext, &start, job.integrator.as_ref().unwrap(), &monitors, header)
        }
        SystemSpec::Discrete {
            map,
            state,
            costate,
            tangent,
            steps,
            tau,
            exact,
            convention,
        } => {
            let params = DiscreteRun {
                state,
                costate,
                tangent: tangent.as_deref(),
                steps: *steps,
                convention: *convention,
            };
            match (map, exact) {
                (MapKind::Cat, false) => iterate_map(name, &cat_map::<f64>(), &params),
                (MapKind::Cat, true) => iterate_map(name, &cat_map::<BigRational>(), &params),
                (MapKind::Shear, false) => iterate_map(name, &cubic_shear::<f64>(), &params),
                (MapKind::Shear, true) => iterate_map(name, &cubic_shear::<BigRational>(), &params),
                (MapKind::FanOut, false) => iterate_map(name, &fan_out::<f64>(), &params),
                (MapKind::FanOut, true) => iterate_map(name, &fan_out::<BigRational>(), &params),
                (MapKind::Euler, _) => iterate_map(name, &DiscreteSystem::euler(&VectorField::rotation(), *tau), &params),
            }
        }
        SystemSpec::Qmcheck { grid, levels } => {
            let mut table = Table::new(vec!["h".into(), "points".into(), "residual".into(), "factor".into()]);
            let mut report = Report::new(name);
            match convergence(grid, *levels) {
                Ok(c) => {
                    let mut points = grid.points();
                    for (i, (h, r)) in c.spacings.iter().zip(&c.residuals).enumerate() {
                        let factor = if i == 0 { f64::NAN } else { c.factors[i - 1] };
                        table.push(vec![*h, points as f64, *r, factor]);
                        points = 2 * (points - 1) + 1;
                    }
                    report.samples = table.rows.len();
                    report.diagnostics = Some(json!({
                        "d": grid.d(),
                        "r_min": grid.r_min(),
                        "r_max": grid.r_max(),
                        "order": c.order,
                        "factors": c.factors,
                    }));
                    RunOutput {
                        table,
                        report,
                        failure: None,
                    }
                }
                Err(e) => failed(name, CliError::Usage(e.to_string())),
            }
        }
    }
}

fn failed(name: &str, err: CliError) -> RunOutput {
    let mut out = RunOutput {
        table: Table::default(),
        report: Report::new(name),
        failure: None,
    };
    out.fail(err);
    out
}

fn coherence_entry(label: &str, v: &VectorField, x: &[f64], tau: f64) -> Option<DetCheck> {
    let rep = coherence_check(v, x, &[tau]).ok()?;
    let s = rep.samples.first()?;
    Some(DetCheck {
        label: label.into(),
        det: s.det,
        tau: Some(tau),
        divergence: Some(rep.divergence),
        residual: Some(s.residual),
        ..Default::default()
    })
}

fn simulate(
    name: &str,
    v: &VectorField,
    x0: &[f64],
    cfg: &IntegratorConfig,
    monitors: &[Monitor],
    state_names: Vec<String>,
) -> RunOutput {
    let (traj, status) = integrate_partial(v, x0, cfg, monitors);
    let mut header = vec!["t".to_string()];
    header.extend(state_names);
    header.extend(monitors.iter().map(|m| m.name().to_string()));
    let mut table = Table::new(header);
    for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row = vec![*t];
        row.extend(x);
        row.extend(traj.monitors.iter().map(|s| s.values[k]));
        table.push(row);
    }

    let mut report = Report::new(name);
    report.samples = traj.len();
    if !traj.is_empty() {
        report.add_drifts(&traj.drifts());
    }
    // det of the Euler step map id + dt·v at the first and last sample
    report.det_checks.extend(coherence_entry("initial", v, x0, cfg.dt));
    if let Some(last) = traj.final_state() {
        report.det_checks.extend(coherence_entry("final", v, last, cfg.dt));
    }

    let mut out = RunOutput {
        table,
        report,
        failure: None,
    };
    if let Err(e) = status {
        let t_last = traj.times.last().copied().unwrap_or(0.0);
        out.fail(CliError::Runtime(format!("{e} (last recorded sample at t = {t_last})")));
    }
    out
}

struct DiscreteRun<'a> {
    state: &'a [f64],
    costate: &'a [f64],
    tangent: Option<&'a [f64]>,
    steps: usize,
    convention: CostateConvention,
}

fn lift<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::from_f64(*x)).collect()
}

fn lower<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(Scalar::to_f64).collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

fn det_entry<T: Scalar>(label: String, sys: &DiscreteSystem<T>, s: &[T]) -> Option<DetCheck> {
    let r = reversibility(sys, s, REVERSIBILITY_TOLERANCE).ok()?;
    Some(DetCheck {
        label,
        det: r.det(),
        condition: Some(r.condition()),
        reversible: Some(r.is_reversible()),
        ..Default::default()
    })
}

fn iterate_map<T: Scalar>(name: &str, sys: &DiscreteSystem<T>, p: &DiscreteRun<'_>) -> RunOutput {
    let n = sys.dim();
    let mut header = vec!["t".to_string()];
    header.extend(numbered("s", n));
    header.extend(numbered("l", n));
    if p.tangent.is_some() {
        header.extend(numbered("ds", n));
        header.push("pairing".into());
    }
    let mut table = Table::new(header);
    let mut report = Report::new(name);
    report.det_checks.extend(det_entry("step 0".into(), sys, &lift::<T>(p.state)));

    let mut es = ExtendedDiscreteState {
        s: lift::<T>(p.state),
        l: lift::<T>(p.costate),
    };
    let mut ds: Option<Vec<T>> = p.tangent.map(lift::<T>);
    let mut pairings: Vec<f64> = Vec::new();
    let mut failure = None;
    let mut action = T::zero();

    for k in 0..=p.steps {
        let mut row = vec![k as f64];
        row.extend(lower(&es.s));
        row.extend(lower(&es.l));
        // the pairing conserved by each convention
        let ds_next = match &ds {
            Some(d) => match sys.tangent_step(&es.s, d) {
                Ok(next) => Some(next),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            },
            None => None,
        };
        if let (Some(d), Some(d_next)) = (&ds, &ds_next) {
            let pairing = match p.convention {
                CostateConvention::NextState => dot(&es.l, d_next),
                CostateConvention::CurrentState => dot(&es.l, d),
            }
            .to_f64();
            row.extend(lower(d));
            row.push(pairing);
            pairings.push(pairing);
        }
        table.push(row);
        if k == p.steps {
            break;
        }
        let phi = sys.step(&es.s);
        action = action + dot(&es.l, &phi);
        match costate_step_with(sys, &es, p.convention) {
            Ok(next) => es = next,
            Err(e) => {
                // where the singular Jacobian was evaluated
                let singular = match p.convention {
                    CostateConvention::NextState => det_entry(format!("step {}", k + 1), sys, &phi),
                    CostateConvention::CurrentState if k > 0 => det_entry(format!("step {k}"), sys, &es.s),
                    CostateConvention::CurrentState => None,
                };
                report.det_checks.extend(singular);
                failure = Some(e);
                break;
            }
        }
        ds = ds_next;
    }

    report.samples = table.rows.len();
    if failure.is_none() {
        report
            .det_checks
            .extend(det_entry(format!("step {}", p.steps), sys, &es.s));
    }
    if !pairings.is_empty() {
        report.add_drifts(&[Drift::of_series("pairing", &pairings)]);
    }
    report.diagnostics = Some(json!({
        "discrete_hamiltonian": action.to_f64(),
        "convention": match p.convention {
            CostateConvention::NextState => "next_state",
            CostateConvention::CurrentState => "current_state",
        },
    }));
    let mut out = RunOutput {
        table,
        report,
        failure: None,
    };
    if let Some(e) = failure {
        out.fail(CliError::Runtime(e.to_string()));
    }
    out
}
