//! Bivariate vector fields on node pairs, the σ-kernel and the effective
//! potential.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{same_grid, Grid, ScalarField};
use crate::operators::{c_ns, frac_divergence};

/// Vector `A(x_i, x_j) ∈ ℝⁿ` for every ordered node pair, stored row-major in
/// pair order with components contiguous.
#[derive(Debug, Clone)]
pub struct BivariateVectorField {
    grid: Arc<Grid>,
    data: Vec<f64>,
}

/// Which part of a bivariate field to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Symmetric,
    Antisymmetric,
    Parallel,
    Perpendicular,
}

impl BivariateVectorField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let len = grid.node_count().pow(2) * grid.n();
        BivariateVectorField {
            grid,
            data: vec![0.0; len],
        }
    }

    pub fn from_raw(grid: Arc<Grid>, data: Vec<f64>) -> Result<Self> {
        let expected = grid.node_count().pow(2) * grid.n();
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(BivariateVectorField { grid, data })
    }

    /// Fills every pair with `f(i, j, out)`; rows are built in parallel.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(usize, usize, &mut [f64]) + Sync) -> Self {
        let (m, n) = (grid.node_count(), grid.n());
        let mut data = vec![0.0; m * m * n];
        data.par_chunks_mut(m * n).enumerate().for_each(|(i, row)| {
            for j in 0..m {
                f(i, j, &mut row[j * n..(j + 1) * n]);
            }
        });
        BivariateVectorField { grid, data }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let (m, n) = (self.grid.node_count(), self.grid.n());
        let k = (i * m + j) * n;
        &self.data[k..k + n]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let (m, n) = (self.grid.node_count(), self.grid.n());
        let k = (i * m + j) * n;
        &mut self.data[k..k + n]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(BivariateVectorField {
            grid: self.grid.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        BivariateVectorField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Multiplies every vector `A(i, j)` by `w(i, j)`.
    pub fn scale_pairs(&self, w: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        Self::from_fn(self.grid.clone(), |i, j, out| {
            let c = w(i, j);
            for (o, a) in out.iter_mut().zip(self.at(i, j)) {
                *o = a * c;
            }
        })
    }

    pub fn part(&self, kind: Part) -> Self {
        decompose(self, kind)
    }

    /// `A_{a∥}`, the antisymmetric part of the parallel part.
    pub fn apar(&self) -> Self {
        decompose(&decompose(self, Part::Parallel), Part::Antisymmetric)
    }

    /// `A_{s∥}`, the symmetric part of the parallel part.
    pub fn spar(&self) -> Self {
        decompose(&decompose(self, Part::Parallel), Part::Symmetric)
    }

    /// `hⁿ Σ_j |A(i,j)|²` for every node `i`.
    pub fn row_norms_squared(&self) -> Vec<f64> {
        let (m, n) = (self.grid.node_count(), self.grid.n());
        let w = self.grid.weight();
        self.data
            .chunks(m * n)
            .map(|row| w * row.iter().map(|v| v * v).sum::<f64>())
            .collect()
    }
}

/// Extracts one of the four parts of `A`.
///
/// The parallel part projects `A(x,y)` onto `x − y`; on the diagonal it is `A`
/// itself, so the perpendicular part vanishes there.
pub fn decompose(a: &BivariateVectorField, kind: Part) -> BivariateVectorField {
    let grid = a.grid.clone();
    let n = grid.n();
    match kind {
        Part::Symmetric => BivariateVectorField::from_fn(grid, |i, j, out| {
            let (aij, aji) = (a.at(i, j), a.at(j, i));
            for d in 0..n {
                out[d] = 0.5 * (aij[d] + aji[d]);
            }
        }),
        Part::Antisymmetric => BivariateVectorField::from_fn(grid, |i, j, out| {
            let (aij, aji) = (a.at(i, j), a.at(j, i));
            for d in 0..n {
                out[d] = aij[d] - 0.5 * (aij[d] + aji[d]);
            }
        }),
        Part::Parallel | Part::Perpendicular => {
            let g = grid.clone();
            BivariateVectorField::from_fn(grid, move |i, j, out| {
                let aij = a.at(i, j);
                let par = parallel_projection(&g, i, j, aij);
                for d in 0..n {
                    out[d] = match kind {
                        Part::Parallel => par[d],
                        _ => aij[d] - par[d],
                    };
                }
            })
        }
    }
}

fn parallel_projection(grid: &Grid, i: usize, j: usize, v: &[f64]) -> [f64; 2] {
    let mut out = [0.0; 2];
    if i == j {
        out[..v.len()].copy_from_slice(v);
        return out;
    }
    let mut d = [0.0; 2];
    let r = grid.displacement(i, j, &mut d);
    let n = v.len();
    let dot: f64 = (0..n).map(|k| v[k] * d[k]).sum();
    let c = dot / (r * r);
    for k in 0..n {
        out[k] = c * d[k];
    }
    out
}

/// Which variable the `L²` norm is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    /// `𝒥₁A(x) = ‖A(·, x)‖`.
    First,
    /// `𝒥₂A(x) = ‖A(x, ·)‖`.
    Second,
}

pub fn j_norm_field(a: &BivariateVectorField, which: Variable) -> ScalarField {
    let grid = a.grid.clone();
    let (m, w) = (grid.node_count(), grid.weight());
    let values = (0..m)
        .map(|x| {
            let sum: f64 = (0..m)
                .map(|y| {
                    let v = match which {
                        Variable::First => a.at(y, x),
                        Variable::Second => a.at(x, y),
                    };
                    v.iter().map(|c| c * c).sum::<f64>()
                })
                .sum();
            (w * sum).sqrt()
        })
        .collect();
    ScalarField::new(grid, values).expect("finite norms of a finite field")
}

/// Symmetric positive weight `σ(x_i, x_j)` on node pairs.
#[derive(Debug, Clone)]
pub struct SigmaKernel {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl SigmaKernel {
    /// Validates symmetry (to round-off) and strict positivity.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        let m = grid.node_count();
        if values.len() != m * m {
            return Err(Error::ShapeMismatch {
                expected: m * m,
                actual: values.len(),
            });
        }
        for i in 0..m {
            for j in 0..m {
                let v = values[i * m + j];
                if !v.is_finite() {
                    return Err(Error::NonFinite(i * m + j));
                }
                if v <= 0.0 {
                    return Err(Error::NonPositiveSigma { i, j, value: v });
                }
                let t = values[j * m + i];
                if (v - t).abs() > 1e-12 * (v.abs() + t.abs()) {
                    return Err(Error::InvalidSigma(format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(SigmaKernel { grid, values })
    }

    pub fn ones(grid: Arc<Grid>) -> Self {
        let m = grid.node_count();
        SigmaKernel {
            grid,
            values: vec![1.0; m * m],
        }
    }

    /// `σ(x,y) = a(x)·a(y)` with `a > 0`.
    pub fn separable(factor: &ScalarField) -> Result<Self> {
        let grid = factor.grid().clone();
        let f = factor.values();
        let m = grid.node_count();
        let values = (0..m * m).map(|k| f[k / m] * f[k % m]).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.node_count() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        let m = self.grid.node_count();
        nalgebra::DMatrix::from_row_slice(m, m, &self.values)
    }

    /// True when `σ = 1` on the diagonal and on every pair outside `Ω²`,
    /// which is what a potential supported in `Ω²` produces.
    pub fn is_admissible(&self) -> bool {
        let m = self.grid.node_count();
        (0..m).all(|i| {
            (0..m).all(|j| (i != j && self.grid.in_omega_squared(i, j)) || self.get(i, j) == 1.0)
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &SigmaKernel) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// `√2 / C_{n,s}^{1/2}`, the factor converting `A_{a∥}` into `σ − 1`.
fn sigma_scale(grid: &Grid) -> f64 {
    std::f64::consts::SQRT_2 / c_ns(grid.n(), grid.s()).sqrt()
}

/// σ-kernel of the leading term:
/// `σ(i,j) = 1 + (√2/C^{1/2}) |x_j−x_i|^{n/2+s} A_{a∥}(i,j)·(x_j−x_i)/|x_j−x_i|`,
/// with `σ(i,i) = 1`. Non-positive entries are reported, never clamped.
pub fn sigma_from_a(a: &BivariateVectorField) -> Result<SigmaKernel> {
    let grid = a.grid().clone();
    let apar = a.apar();
    let (m, n, s) = (grid.node_count(), grid.n(), grid.s());
    let scale = sigma_scale(&grid);
    let expo = n as f64 / 2.0 + s;
    let mut values = vec![1.0; m * m];
    let mut d = [0.0; 2];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let r = grid.displacement(i, j, &mut d);
            let v = apar.at(i, j);
            let proj: f64 = (0..n).map(|k| v[k] * d[k]).sum::<f64>() / r;
            let sigma = 1.0 + scale * r.powf(expo) * proj;
            if sigma <= 0.0 || !sigma.is_finite() {
                return Err(Error::NonPositiveSigma { i, j, value: sigma });
            }
            values[i * m + j] = sigma;
        }
    }
    // Entries (i,j) and (j,i) agree up to round-off; store the mean so the
    // kernel is exactly symmetric.
    for i in 0..m {
        for j in (i + 1)..m {
            let v = 0.5 * (values[i * m + j] + values[j * m + i]);
            values[i * m + j] = v;
            values[j * m + i] = v;
        }
    }
    SigmaKernel::new(grid, values)
}

/// Inverse of [`sigma_from_a`] on antisymmetric parallel fields:
/// `A_{a∥} = α (σ − 1)`.
pub fn a_apar_from_sigma(sigma: &SigmaKernel) -> BivariateVectorField {
    let grid = sigma.grid().clone();
    let alpha = grid.alpha();
    BivariateVectorField::from_fn(grid.clone(), |i, j, out| {
        let c = sigma.get(i, j) - 1.0;
        for (o, a) in out.iter_mut().zip(alpha.at(i, j)) {
            *o = a * c;
        }
    })
}

/// A real vector potential `A` together with a scalar potential `q`
/// supported in `Ω`.
#[derive(Debug, Clone)]
pub struct Potentials {
    pub a: BivariateVectorField,
    pub q: ScalarField,
}

impl Potentials {
    pub fn new(a: BivariateVectorField, q: ScalarField) -> Result<Self> {
        same_grid(a.grid(), q.grid())?;
        let grid = q.grid();
        if let Some(&i) = grid.exterior_nodes().iter().find(|&&i| q.values()[i] != 0.0) {
            return Err(Error::InvalidPotentials(format!(
                "q must vanish off the domain, but q({i}) = {}",
                q.values()[i]
            )));
        }
        Ok(Potentials { a, q })
    }

    pub fn zero(grid: Arc<Grid>) -> Self {
        Potentials {
            a: BivariateVectorField::zeros(grid.clone()),
            q: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.q.grid()
    }

    /// Integrability exponent `p = max{2, n/(2s)}`.
    pub fn p_exponent(&self) -> f64 {
        let g = self.grid();
        f64::max(2.0, g.n() as f64 / (2.0 * g.s()))
    }

    /// Stable content hash.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in self.a.raw().iter().chain(self.q.values()) {
            h.update(v.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Effective potential `Q = q + hⁿ Σ_j |A(i,j)|² + (∇·)ˢ A_{s∥}`.
pub fn assemble_q(p: &Potentials) -> ScalarField {
    effective_potential(&p.a, p.q.values())
}

pub(crate) fn effective_potential(a: &BivariateVectorField, q: &[f64]) -> ScalarField {
    let grid = a.grid().clone();
    let norms = a.row_norms_squared();
    let div = frac_divergence(&a.spar());
    let values = q
        .iter()
        .zip(&norms)
        .zip(div.values())
        .map(|((q, n2), d)| q + n2 + d)
        .collect();
    ScalarField::new(grid, values).expect("finite effective potential")
}

/// Discrete status of the admissibility properties.
///
/// `(p3)` and `(p5)` are decided exactly; `(p1)`, `(p2)` and `(p4)` are always
/// finite on a finite grid and are reported as norm values only.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub p_exponent: f64,
    /// `‖𝒥₁A‖_{L^{2p}}`.
    pub p1_j1_norm: f64,
    /// `‖𝒥₂A‖_{L^{2p}}`.
    pub p1_j2_norm: f64,
    /// `‖A_{s∥}‖_{L²(pairs)}` (discrete stand-in for the Sobolev norm).
    pub p2_spar_norm: f64,
    /// `A_{a∥}(x,y)·(y−x) ≥ 0` at every pair.
    pub p3: bool,
    /// Most negative value of `A_{a∥}(x,y)·(y−x)` (0 when none).
    pub p3_min: f64,
    /// `‖q‖_{L^p(Ω)}`.
    pub p4_q_norm: f64,
    /// `supp A ⊆ Ω²`.
    pub p5: bool,
    pub q_vanishes_outside: bool,
    /// Membership in the class satisfying all five properties.
    pub in_class: bool,
}

pub fn check_potentials(p: &Potentials) -> PropertyReport {
    let grid = p.grid();
    let (m, n, w) = (grid.node_count(), grid.n(), grid.weight());
    let pe = p.p_exponent();
    let lp = |f: &ScalarField, e: f64| {
        (w * f.values().iter().map(|v| v.abs().powf(e)).sum::<f64>()).powf(1.0 / e)
    };
    let j1 = j_norm_field(&p.a, Variable::First);
    let j2 = j_norm_field(&p.a, Variable::Second);
    let spar = p.a.spar();
    let p2 = (w * w * spar.raw().iter().map(|v| v * v).sum::<f64>()).sqrt();

    let apar = p.a.apar();
    let mut p3_min = 0.0f64;
    let mut p3 = true;
    let mut d = [0.0; 2];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let r = grid.displacement(i, j, &mut d);
            let v = apar.at(i, j);
            let dot: f64 = (0..n).map(|k| v[k] * d[k]).sum();
            let mag: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt() * r;
            // Round-off slack only: the projection is recomputed from A.
            if dot < -1e-12 * mag {
                p3 = false;
            }
            p3_min = p3_min.min(dot);
        }
    }
    let p5 = (0..m).all(|i| {
        (0..m).all(|j| grid.in_omega_squared(i, j) || p.a.at(i, j).iter().all(|&c| c == 0.0))
    });
    let q_out = grid.exterior_nodes().iter().all(|&i| p.q.values()[i] == 0.0);
    let q_in: Vec<f64> = (0..m)
        .map(|i| if grid.is_interior(i) { p.q.values()[i] } else { 0.0 })
        .collect();
    let q_in = ScalarField::new(grid.clone(), q_in).expect("finite q");
    PropertyReport {
        p_exponent: pe,
        p1_j1_norm: lp(&j1, 2.0 * pe),
        p1_j2_norm: lp(&j2, 2.0 * pe),
        p2_spar_norm: p2,
        p3,
        p3_min,
        p4_q_norm: lp(&q_in, pe),
        p5,
        q_vanishes_outside: q_out,
        in_class: p3 && p5 && q_out,
    }
}
