//! Finite-difference check that `V = 4(4 - d)/r²` solves the stationary
//! radial equation `ΔV = V²/2` in `d` dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_GRID_POINTS: usize = 16;

pub fn conformal_potential(d: u32, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    Ok(4.0 * (4.0 - d as f64) / (r * r))
}

/// Uniform radial grid in `d` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    r_min: f64,
    r_max: f64,
    points: usize,
    d: u32,
}

impl RadialGrid {
    pub fn new(r_min: f64, r_max: f64, points: usize, d: u32) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
            return Err(Error::Grid(format!("need 0 < r_min < r_max, got [{r_min}, {r_max}]")));
        }
        if points < MIN_GRID_POINTS {
            return Err(Error::Grid(format!(
                "need at least {MIN_GRID_POINTS} points, got {points}"
            )));
        }
        if d == 0 {
            return Err(Error::Grid("dimension must be positive".into()));
        }
        Ok(Self {
            r_min,
            r_max,
            points,
            d,
        })
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn spacing(&self) -> f64 {
        (self.r_max - self.r_min) / (self.points - 1) as f64
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.spacing()
    }

    /// Same interval with the spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * (self.points - 1) + 1,
            ..*self
        }
    }
}

/// `max |V'' + (d-1)/r V' - V²/2|` over the interior grid points, with
/// second-order central differences.
pub fn stationarity_residual(g: &RadialGrid) -> Result<f64> {
    let g = RadialGrid::new(g.r_min, g.r_max, g.points, g.d)?;
    let h = g.spacing();
    let v: Vec<f64> = (0..g.points)
        .map(|i| conformal_potential(g.d, g.radius(i)))
        .collect::<Result<_>>()?;
    let dm1 = g.d as f64 - 1.0;
    let mut worst = 0.0_f64;
    for i in 1..g.points - 1 {
        let r = g.radius(i);
        let second = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
        let first = (v[i + 1] - v[i - 1]) / (2.0 * h);
        let res = (second + dm1 / r * first - 0.5 * v[i] * v[i]).abs();
        worst = worst.max(res);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub spacings: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Successive ratios `residual(h) / residual(h/2)`.
    pub factors: Vec<f64>,
    /// Observed order from the last refinement; `None` when a residual is zero.
    pub order: Option<f64>,
}

/// Residuals on `levels` successively halved grids.
pub fn convergence(g: &RadialGrid, levels: usize) -> Result<Convergence> {
    if levels < 2 {
        return Err(Error::Grid("convergence study needs at least two levels".into()));
    }
    let mut grid = *g;
    let mut spacings = Vec::with_capacity(levels);
    let mut residuals = Vec::with_capacity(levels);
    for _ in 0..levels {
        spacings.push(grid.spacing());
        residuals.push(stationarity_residual(&grid)?);
        grid = grid.refined();
    }
    let factors: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    let order = factors
        .last()
        .filter(|f| f.is_finite() && **f > 0.0)
        .map(|f| f.log2());
    Ok(Convergence {
        spacings,
        residuals,
        factors,
        order,
    })
}
