//! Seeded Dirichlet solve by preconditioned conjugate gradients.
//!
//! The reduced Laplacian over unseeded voxels is applied matrix-free from the
//! diagonal and the three forward edge bands; seeded voxels act as identity
//! rows whose couplings are moved to the right-hand side.

use serde::{Deserialize, Serialize};

use super::seeds::SeedMap;
use super::weights::EdgeWeights;
use crate::error::{Error, Result};
use crate::geometry::{self, Extent};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    #[default]
    Jacobi,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Absolute bound on the residual 2-norm.
    pub residual_tolerance: f64,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 5000,
            residual_tolerance: 1e-2,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.residual_tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid solver config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrickSolution {
    pub probabilities: Vec<f32>,
    pub iterations_used: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Largest distance by which an iterate value left `[0, 1]` before clamping.
    pub clamped_by: f64,
}

struct System<'a> {
    extent: Extent,
    strides: [usize; 3],
    w: &'a EdgeWeights,
    free: Vec<bool>,
    diag: Vec<f64>,
}

impl System<'_> {
    fn neighbors(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        let p = geometry::delinear(self.extent, i);
        for a in 0..3 {
            if p[a] + 1 < self.extent[a] {
                f(i + self.strides[a], self.w.axis(a)[i]);
            }
            if p[a] > 0 {
                let j = i - self.strides[a];
                f(j, self.w.axis(a)[j]);
            }
        }
    }

    /// `y = L_u x` on free voxels, zero elsewhere.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [ex, ey, ez] = self.extent;
        let [_, sy, sz] = self.strides;
        let (wx, wy, wz) = (self.w.axis(0), self.w.axis(1), self.w.axis(2));
        for z in 0..ez {
            for yy in 0..ey {
                let row = sy * yy + sz * z;
                for xx in 0..ex {
                    let i = row + xx;
                    if !self.free[i] {
                        y[i] = 0.0;
                        continue;
                    }
                    let mut acc = self.diag[i] * x[i];
                    if xx + 1 < ex && self.free[i + 1] {
                        acc -= wx[i] * x[i + 1];
                    }
                    if xx > 0 && self.free[i - 1] {
                        acc -= wx[i - 1] * x[i - 1];
                    }
                    if yy + 1 < ey && self.free[i + sy] {
                        acc -= wy[i] * x[i + sy];
                    }
                    if yy > 0 && self.free[i - sy] {
                        acc -= wy[i - sy] * x[i - sy];
                    }
                    if z + 1 < ez && self.free[i + sz] {
                        acc -= wz[i] * x[i + sz];
                    }
                    if z > 0 && self.free[i - sz] {
                        acc -= wz[i - sz] * x[i - sz];
                    }
                    y[i] = acc;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the random walker Dirichlet problem for the unseeded voxels.
///
/// Starts from `init` (0.5 where absent) with seeded voxels fixed to their
/// values. Without seeds the start vector is returned unchanged and reported
/// as converged. The result is clamped to `[0, 1]`.
pub fn solve(
    weights: &EdgeWeights,
    seeds: &SeedMap,
    cfg: &SolverConfig,
    init: Option<&[f32]>,
) -> Result<BrickSolution> {
    cfg.validate()?;
    let extent = weights.extent();
    let n = geometry::volume(extent);
    if seeds.extent() != extent {
        return Err(Error::InvalidArgument(format!(
            "seed extent {:?} differs from weight extent {extent:?}",
            seeds.extent()
        )));
    }
    if let Some(init) = init {
        if init.len() != n {
            return Err(Error::InvalidArgument(format!(
                "init has {} voxels, expected {n}",
                init.len()
            )));
        }
    }
    let mut x: Vec<f64> = match init {
        Some(v) => v.iter().map(|&a| a as f64).collect(),
        None => vec![0.5; n],
    };
    let mut free = vec![true; n];
    for (i, v) in seeds.iter() {
        x[i] = v;
        free[i] = false;
    }
    if seeds.is_empty() {
        return Ok(finish(x, 0, 0.0, true));
    }

    let mut sys = System {
        extent,
        strides: [1, extent[0], extent[0] * extent[1]],
        w: weights,
        free,
        diag: vec![0.0; n],
    };
    // b_i = Σ w x_seed over seeded neighbors of free i
    let mut b = vec![0.0; n];
    for i in 0..n {
        if !sys.free[i] {
            continue;
        }
        let (mut d, mut rhs) = (0.0, 0.0);
        sys.neighbors(i, |j, w| {
            d += w;
            if !sys.free[j] {
                rhs += w * x[j];
            }
        });
        sys.diag[i] = d;
        b[i] = rhs;
    }
    let inv_diag: Vec<f64> = sys
        .diag
        .iter()
        .zip(&sys.free)
        .map(|(&d, &f)| match cfg.preconditioner {
            Preconditioner::Jacobi if f && d > 0.0 => 1.0 / d,
            _ if f => 1.0,
            _ => 0.0,
        })
        .collect();

    let mut r = vec![0.0; n];
    sys.apply(&x, &mut r);
    for i in 0..n {
        r[i] = if sys.free[i] { b[i] - r[i] } else { 0.0 };
    }
    let mut res = dot(&r, &r).sqrt();
    if res <= cfg.residual_tolerance {
        return Ok(finish(x, 0, res, true));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        sys.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        iterations += 1;
        res = dot(&r, &r).sqrt();
        if res <= cfg.residual_tolerance {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let converged = res <= cfg.residual_tolerance;
    if !converged {
        log::debug!("solve stopped after {iterations} iterations at residual {res:.3e}");
    }
    Ok(finish(x, iterations, res, converged))
}

fn finish(x: Vec<f64>, iterations_used: usize, final_residual: f64, converged: bool) -> BrickSolution {
    let mut clamped_by = 0f64;
    let probabilities = x
        .into_iter()
        .map(|v| {
            clamped_by = clamped_by.max(-v).max(v - 1.0);
            v.clamp(0.0, 1.0) as f32
        })
        .collect();
    BrickSolution {
        probabilities,
        iterations_used,
        final_residual,
        converged,
        clamped_by,
    }
}

/// Foreground iff probability exceeds `level`; exact ties are background.
pub fn threshold(probabilities: &[f32], level: f32) -> Vec<bool> {
    probabilities.iter().map(|&p| p > level).collect()
}

/// `½ Σ_edges w (x_p − x_q)²`.
pub fn dirichlet_energy(weights: &EdgeWeights, x: &[f32]) -> f64 {
    0.5 * weights
        .iter()
        .map(|(p, q, w)| {
            let d = x[p] as f64 - x[q] as f64;
            w * d * d
        })
        .sum::<f64>()
}
