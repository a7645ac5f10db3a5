//! Point vortices in the plane,
//!
//! ```text
//! ż_n = i Σ_{m≠n} γ_m / (z̄_n - z̄_m)
//! ```
//!
//! taken verbatim (no `1/2π`; any such factor is absorbed into the time unit),
//! and the three-vortex reduction to `u_i = ln|z_j - z_k|²`.
//!
//! Complex positions are stored as interleaved `(x_1, y_1, x_2, y_2, …)` so
//! the generic integrators apply unchanged.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flows::{integrate, IntegratorConfig, Monitor, VectorField};
use crate::nambu::{Hamiltonian, NambuSystem};

/// Minimum allowed separation between two vortices, in length units.
pub const COLLISION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct VortexConfiguration {
    gammas: Vec<f64>,
    positions: Vec<Complex64>,
    quantum: Option<f64>,
}

/// Fails on the first pair closer than `eps`.
pub fn check_separation(positions: &[Complex64], eps: f64) -> Result<()> {
    for n in 0..positions.len() {
        for m in (n + 1)..positions.len() {
            let distance = (positions[n] - positions[m]).norm();
            if !(distance >= eps) {
                return Err(Error::Collision {
                    first: n,
                    second: m,
                    distance,
                });
            }
        }
    }
    Ok(())
}

fn interleaved_positions(state: &[f64]) -> Vec<Complex64> {
    state
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect()
}

impl VortexConfiguration {
    pub fn new(gammas: Vec<f64>, positions: Vec<Complex64>) -> Result<Self> {
        if gammas.is_empty() || gammas.len() != positions.len() {
            return Err(Error::Config(format!(
                "need one circulation per vortex, got {} circulations for {} positions",
                gammas.len(),
                positions.len()
            )));
        }
        if let Some(g) = gammas.iter().find(|g| !g.is_finite() || **g == 0.0) {
            return Err(Error::Config(format!("circulations must be finite and nonzero, got {g}")));
        }
        if positions.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { what: "vortex position" });
        }
        check_separation(&positions, COLLISION_EPS)?;
        Ok(Self {
            gammas,
            positions,
            quantum: None,
        })
    }

    /// Circulations `γ_n = q_n · unit` with nonzero integers `q_n`.
    pub fn quantized(charges: &[i64], unit: f64, positions: Vec<Complex64>) -> Result<Self> {
        if !(unit.is_finite() && unit > 0.0) {
            return Err(Error::Config(format!("circulation unit must be positive, got {unit}")));
        }
        if charges.contains(&0) {
            return Err(Error::Config("quantized circulations must be nonzero integers".into()));
        }
        let gammas = charges.iter().map(|&q| q as f64 * unit).collect();
        let mut c = Self::new(gammas, positions)?;
        c.quantum = Some(unit);
        Ok(c)
    }

    /// Builds a configuration from an interleaved state vector.
    pub fn from_state(gammas: Vec<f64>, state: &[f64]) -> Result<Self> {
        if state.len() != 2 * gammas.len() {
            return Err(Error::Dimension {
                expected: 2 * gammas.len(),
                got: state.len(),
            });
        }
        Self::new(gammas, interleaved_positions(state))
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn positions(&self) -> &[Complex64] {
        &self.positions
    }

    pub fn quantum(&self) -> Option<f64> {
        self.quantum
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn to_state(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|z| [z.re, z.im]).collect()
    }
}

fn velocities(gammas: &[f64], positions: &[Complex64]) -> Vec<Complex64> {
    let i = Complex64::i();
    positions
        .iter()
        .enumerate()
        .map(|(n, zn)| {
            positions
                .iter()
                .zip(gammas)
                .enumerate()
                .filter(|(m, _)| *m != n)
                .map(|(_, (zm, g))| i * *g / (zn - zm).conj())
                .sum()
        })
        .collect()
}

/// Complex velocities of every vortex.
pub fn vortex_rhs(c: &VortexConfiguration) -> Result<Vec<Complex64>> {
    check_separation(&c.positions, COLLISION_EPS)?;
    Ok(velocities(&c.gammas, &c.positions))
}

fn hamiltonian_of(gammas: &[f64], positions: &[Complex64]) -> f64 {
    let mut h = 0.0;
    for n in 0..positions.len() {
        for m in 0..positions.len() {
            if n != m {
                h += gammas[n] * gammas[m] * (positions[n] - positions[m]).norm().ln();
            }
        }
    }
    h
}

/// `Σ_{n≠m} γ_n γ_m ln|z_n - z_m|` over ordered pairs.
pub fn vortex_hamiltonian(c: &VortexConfiguration) -> Result<f64> {
    check_separation(&c.positions, COLLISION_EPS)?;
    Ok(hamiltonian_of(&c.gammas, &c.positions))
}

/// Linear impulse `Σ γ_n z_n`.
pub fn linear_impulse(c: &VortexConfiguration) -> Complex64 {
    c.positions.iter().zip(&c.gammas).map(|(z, g)| z * *g).sum()
}

/// The N-vortex system on interleaved coordinates, with analytic Jacobian
/// and a collision guard.
pub fn vortex_field(gammas: &[f64]) -> VectorField {
    let n = gammas.len();
    let g_eval = gammas.to_vec();
    let g_jac = gammas.to_vec();
    VectorField::new(2 * n, move |state| {
        velocities(&g_eval, &interleaved_positions(state))
            .into_iter()
            .flat_map(|w| [w.re, w.im])
            .collect()
    })
    .with_jacobian(move |state| vortex_jacobian(&g_jac, state))
    .with_guard(|state| check_separation(&interleaved_positions(state), COLLISION_EPS))
}

// With a = x_n - x_m, b = y_n - y_m, r² = a² + b², vortex m contributes
// ẋ_n = -γ_m b / r², ẏ_n = γ_m a / r².
fn vortex_jacobian(gammas: &[f64], state: &[f64]) -> DMatrix<f64> {
    let n = gammas.len();
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for m in 0..n {
            if m == i {
                continue;
            }
            let a = state[2 * i] - state[2 * m];
            let b = state[2 * i + 1] - state[2 * m + 1];
            let r2 = a * a + b * b;
            let r4 = r2 * r2;
            let g = gammas[m];
            let dxa = 2.0 * g * a * b / r4;
            let dxb = -g * (a * a - b * b) / r4;
            let dya = g * (b * b - a * a) / r4;
            let dyb = -2.0 * g * a * b / r4;
            jac[(2 * i, 2 * i)] += dxa;
            jac[(2 * i, 2 * i + 1)] += dxb;
            jac[(2 * i + 1, 2 * i)] += dya;
            jac[(2 * i + 1, 2 * i + 1)] += dyb;
            jac[(2 * i, 2 * m)] -= dxa;
            jac[(2 * i, 2 * m + 1)] -= dxb;
            jac[(2 * i + 1, 2 * m)] -= dya;
            jac[(2 * i + 1, 2 * m + 1)] -= dyb;
        }
    }
    jac
}

/// Monitors `H`, `Px`, `Py` (Hamiltonian and linear impulse) for interleaved states.
pub fn vortex_monitors(gammas: &[f64]) -> Vec<Monitor> {
    let gh = gammas.to_vec();
    let gx = gammas.to_vec();
    let gy = gammas.to_vec();
    vec![
        Monitor::new("H", move |s| hamiltonian_of(&gh, &interleaved_positions(s))),
        Monitor::new("Px", move |s| gx.iter().enumerate().map(|(n, g)| g * s[2 * n]).sum()),
        Monitor::new("Py", move |s| {
            gy.iter().enumerate().map(|(n, g)| g * s[2 * n + 1]).sum()
        }),
    ]
}

/// Pairwise log-distances of three vortices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState {
    pub u: [f64; 3],
    pub gammas: [f64; 3],
}

impl ReducedState {
    pub fn new(u: [f64; 3], gammas: [f64; 3]) -> Result<Self> {
        if u.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { what: "reduced state" });
        }
        if gammas.iter().any(|g| !g.is_finite() || *g == 0.0) {
            return Err(Error::Config("circulations must be finite and nonzero".into()));
        }
        Ok(Self { u, gammas })
    }
}

/// `u_i = ln|z_j - z_k|²` for cyclic `(i, j, k)`.
pub fn reduce3(c: &VortexConfiguration) -> Result<ReducedState> {
    if c.len() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            got: c.len(),
        });
    }
    check_separation(&c.positions, COLLISION_EPS)?;
    let z = &c.positions;
    let u = [
        (z[1] - z[2]).norm_sqr().ln(),
        (z[2] - z[0]).norm_sqr().ln(),
        (z[0] - z[1]).norm_sqr().ln(),
    ];
    ReducedState::new(u, [c.gammas[0], c.gammas[1], c.gammas[2]])
}

fn reduced_rate(u: &[f64], g: &[f64; 3]) -> [f64; 3] {
    let e = [u[0].exp(), u[1].exp(), u[2].exp()];
    [
        g[0] * (e[1] - e[2]),
        g[1] * (e[2] - e[0]),
        g[2] * (e[0] - e[1]),
    ]
}

/// `u̇_i = γ_i (e^{u_j} - e^{u_k})` for cyclic `(i, j, k)`.
pub fn reduced_rhs(s: &ReducedState) -> [f64; 3] {
    reduced_rate(&s.u, &s.gammas)
}

/// `(Σ e^{u_i}/γ_i, Σ u_i/γ_i)`
pub fn reduced_integrals(s: &ReducedState) -> (f64, f64) {
    let g = &s.gammas;
    (
        (0..3).map(|i| s.u[i].exp() / g[i]).sum(),
        (0..3).map(|i| s.u[i] / g[i]).sum(),
    )
}

/// The reduced system as a field on `u`.
pub fn reduced_field(gammas: [f64; 3]) -> VectorField {
    VectorField::new(3, move |u| reduced_rate(u, &gammas).to_vec()).with_jacobian(move |u| {
        let e = [u[0].exp(), u[1].exp(), u[2].exp()];
        let g = &gammas;
        DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                g[0] * e[1],
                -g[0] * e[2],
                -g[1] * e[0],
                0.0,
                g[1] * e[2],
                g[2] * e[0],
                -g[2] * e[1],
                0.0,
            ],
        )
    })
}

/// Monitors `H1`, `H2` of the reduced system.
pub fn reduced_monitors(gammas: [f64; 3]) -> Vec<Monitor> {
    vec![
        Monitor::new("H1", move |u| (0..3).map(|i| u[i].exp() / gammas[i]).sum()),
        Monitor::new("H2", move |u| (0..3).map(|i| u[i] / gammas[i]).sum()),
    ]
}

/// The reduced system written as a Nambu flow with `H1`, `H2` and weight
/// `γ1 γ2 γ3`, using analytic gradients.
pub fn reduced_nambu_system(gammas: [f64; 3]) -> Result<NambuSystem> {
    let h1 = Hamiltonian::new(move |u| (0..3).map(|i| u[i].exp() / gammas[i]).sum())
        .with_gradient(move |u| (0..3).map(|i| u[i].exp() / gammas[i]).collect());
    let h2 = Hamiltonian::new(move |u| (0..3).map(|i| u[i] / gammas[i]).sum())
        .with_gradient(move |_| gammas.iter().map(|g| 1.0 / g).collect());
    NambuSystem::new(3, vec![h1, h2], gammas.iter().product())
}

/// Like [`reduced_nambu_system`], but every gradient is taken by central differences.
pub fn reduced_nambu_system_fd(gammas: [f64; 3]) -> Result<NambuSystem> {
    let h1 = Hamiltonian::new(move |u| (0..3).map(|i| u[i].exp() / gammas[i]).sum());
    let h2 = Hamiltonian::new(move |u| (0..3).map(|i| u[i] / gammas[i]).sum());
    NambuSystem::new(3, vec![h1, h2], gammas.iter().product())
}

/// Comparison of the reduced flow against the log-distances of a full
/// three-vortex trajectory, sample by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionMismatch {
    pub max_abs: f64,
    pub full_final: [f64; 3],
    pub reduced_final: [f64; 3],
}

/// Integrates both the full system and the reduced system from matching
/// initial data and reports how far apart the `u` variables end up.
pub fn reduction_mismatch(
    c: &VortexConfiguration,
    cfg: &IntegratorConfig,
) -> Result<ReductionMismatch> {
    let start = reduce3(c)?;
    let gammas = start.gammas;
    let full = integrate(&vortex_field(c.gammas()), &c.to_state(), cfg, &[])?;
    let reduced = integrate(&reduced_field(gammas), &start.u, cfg, &[])?;
    let mut max_abs = 0.0_f64;
    let mut full_final = start.u;
    let mut reduced_final = start.u;
    for (zs, us) in full.states.iter().zip(&reduced.states) {
        let u_full = reduce3(&VortexConfiguration::from_state(c.gammas().to_vec(), zs)?)?.u;
        for i in 0..3 {
            max_abs = max_abs.max((u_full[i] - us[i]).abs());
        }
        full_final = u_full;
        reduced_final = [us[0], us[1], us[2]];
    }
    Ok(ReductionMismatch {
        max_abs,
        full_final,
        reduced_final,
    })
}
