//! Seeded generators for potentials, conductivities and test fields.
//!
//! All generators draw from `ChaCha8Rng::seed_from_u64(seed)` in node order,
//! so outputs depend only on the seed and the grid.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fields::{BivariateVectorField, Potentials};
use crate::grid::{Grid, ScalarField};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform values in `[−scale, scale)` at every node.
pub fn random_scalar(grid: &Arc<Grid>, seed: u64, scale: f64) -> ScalarField {
    let mut r = rng(seed);
    let v = (0..grid.node_count()).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect();
    ScalarField::new(grid.clone(), v).expect("finite")
}

/// Uniform components in `[−scale, scale)`; with `omega_only` every pair
/// outside `Ω×Ω` is zero.
pub fn random_field(grid: &Arc<Grid>, seed: u64, scale: f64, omega_only: bool) -> BivariateVectorField {
    let mut r = rng(seed);
    let (m, n) = (grid.node_count(), grid.n());
    let mut data = vec![0.0; m * m * n];
    for i in 0..m {
        for j in 0..m {
            let keep = !omega_only || grid.in_omega_squared(i, j);
            for k in 0..n {
                let x = scale * (2.0 * r.random::<f64>() - 1.0);
                if keep {
                    data[(i * m + j) * n + k] = x;
                }
            }
        }
    }
    BivariateVectorField::from_raw(grid.clone(), data).expect("finite")
}

/// Zeroes every pair outside `Ω×Ω`.
pub fn restrict_to_omega(a: &BivariateVectorField) -> BivariateVectorField {
    let grid = a.grid().clone();
    BivariateVectorField::from_fn(grid.clone(), |i, j, out| {
        if grid.in_omega_squared(i, j) {
            out.copy_from_slice(a.at(i, j));
        }
    })
}

/// Shape of a random admissible pair `(A, q)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomSpec {
    /// `σ − 1` is drawn from `[0, spread)` on off-diagonal pairs of `Ω×Ω`.
    pub spread: f64,
    /// Amplitude of the symmetric parallel part, relative to `|α|`.
    pub symmetric_scale: f64,
    /// Amplitude of the perpendicular part relative to `|α|` (ignored for n = 1).
    pub perpendicular_scale: f64,
    /// Amplitude of the diagonal values `A(i,i)`.
    pub diagonal_scale: f64,
    /// `q` is drawn from `[0, q_max)` on `Ω`.
    pub q_max: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            spread: 0.5,
            symmetric_scale: 0.3,
            perpendicular_scale: 0.3,
            diagonal_scale: 0.3,
            q_max: 1.0,
        }
    }
}

impl RandomSpec {
    /// Only the antisymmetric parallel part, with `q = 0`.
    pub fn antisymmetric_parallel(spread: f64) -> Self {
        RandomSpec {
            spread,
            symmetric_scale: 0.0,
            perpendicular_scale: 0.0,
            diagonal_scale: 0.0,
            q_max: 0.0,
        }
    }
}

/// A random pair in the admissible class: supported in `Ω×Ω`, `σ ≥ 1`,
/// `q ≥ 0` vanishing off `Ω`.
pub fn random_admissible(grid: &Arc<Grid>, seed: u64, spec: &RandomSpec) -> Potentials {
    let mut r = rng(seed);
    let (m, n) = (grid.node_count(), grid.n());
    let alpha = grid.alpha();
    let omega = grid.interior_nodes();
    let mut a = BivariateVectorField::zeros(grid.clone());
    let mut d = [0.0; 2];
    for (p, &i) in omega.iter().enumerate() {
        for &j in &omega[p + 1..] {
            let sigma_m1 = spec.spread * r.random::<f64>();
            let b = spec.symmetric_scale * (2.0 * r.random::<f64>() - 1.0);
            let c_ij = spec.perpendicular_scale * (2.0 * r.random::<f64>() - 1.0);
            let c_ji = spec.perpendicular_scale * (2.0 * r.random::<f64>() - 1.0);
            let dist = grid.displacement(i, j, &mut d);
            let norm = alpha.norm_sq(i, j).sqrt();
            let (ux, uy) = (d[0] / dist, if n == 2 { d[1] / dist } else { 0.0 });
            // A_{a∥} = α(σ−1); A_{s∥}(i,j) = b|α| d̂_ij with d̂_ji = −d̂_ij, b odd in (i,j).
            for (x, y, sign, c) in [(i, j, 1.0, c_ij), (j, i, -1.0, c_ji)] {
                let al = alpha.at(x, y);
                let out = a.at_mut(x, y);
                out[0] = al[0] * sigma_m1 + b * norm * ux;
                if n == 2 {
                    out[1] = al[1] * sigma_m1 + b * norm * uy;
                    out[0] += -c * norm * uy * sign;
                    out[1] += c * norm * ux * sign;
                }
            }
        }
    }
    for &i in omega {
        for k in 0..n {
            a.at_mut(i, i)[k] = spec.diagonal_scale * (2.0 * r.random::<f64>() - 1.0);
        }
    }
    let mut q = vec![0.0; m];
    for &i in omega {
        q[i] = spec.q_max * r.random::<f64>();
    }
    Potentials::new(a, ScalarField::new(grid.clone(), q).expect("finite")).expect("admissible")
}

/// `q` uniform in `[0, max)` on `Ω`, zero elsewhere.
pub fn random_q(grid: &Arc<Grid>, seed: u64, max: f64) -> ScalarField {
    let mut r = rng(seed);
    let v = (0..grid.node_count())
        .map(|i| {
            let x = max * r.random::<f64>();
            if grid.is_interior(i) {
                x
            } else {
                0.0
            }
        })
        .collect();
    ScalarField::new(grid.clone(), v).expect("finite")
}

/// `γ = 1 + amplitude·U[0,1)` on `Ω`, `γ = 1` elsewhere.
pub fn random_conductivity(grid: &Arc<Grid>, seed: u64, amplitude: f64) -> ScalarField {
    let mut r = rng(seed);
    let v = (0..grid.node_count())
        .map(|i| {
            let x = amplitude * r.random::<f64>();
            if grid.is_interior(i) {
                1.0 + x
            } else {
                1.0
            }
        })
        .collect();
    ScalarField::new(grid.clone(), v).expect("finite")
}

/// Positive gauge function with `φ = 1` off `Ω`.
pub fn random_gauge_function(grid: &Arc<Grid>, seed: u64, amplitude: f64) -> ScalarField {
    random_conductivity(grid, seed, amplitude)
}
