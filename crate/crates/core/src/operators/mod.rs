//! Discrete nonlocal operators.
//!
//! Every operator is represented by its *weak* matrix `K`: for nodal vectors
//! `u, v` the bilinear pairing is `vᵀ K u`, so `K = hⁿ · (pointwise matrix)`.
//! [`OperatorMatrix::pointwise`] undoes the quadrature weight.
//!
//! The magnetic fractional Laplacian is assembled three independent ways:
//!
//! * [`assemble_bilinear`]: directly from `h²ⁿ Σ_{i,j} ∇ˢ_A u · ∇ˢ_A v + hⁿ Σ q u v`;
//! * [`assemble_expansion`]: from the split into `(−Δ)ˢ`, the `A_{a∥}` gradient
//!   coupling and the effective potential `Q`;
//! * [`assemble_sigma_form`]: from the σ-weighted nonlocal Laplacian plus `Q`.
//!
//! The principal value is realized by dropping the `i = j` term, where
//! `α(i,i) = 0`. Pair sums otherwise run over all ordered pairs, so a nonzero
//! diagonal `A(i,i)` only contributes through `|A|²`.

mod conductivity;
mod fourier;

pub use conductivity::{
    conductivity_matrix, reduction_qprime, reduction_residual, reduction_terms, ReductionTerms,
};
pub use fourier::{fourier_symbol_check, FourierReport};

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::Result;
use crate::fields::{effective_potential, BivariateVectorField, Potentials, SigmaKernel};
use crate::grid::{Grid, ScalarField};

/// Normalization `C_{n,s} = 4ˢ Γ(n/2+s) / (π^{n/2} |Γ(−s)|)` giving
/// `(−Δ)ˢ` the symbol `|ξ|^{2s}`.
pub fn c_ns(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    4f64.powf(s) * gamma(nf / 2.0 + s) / (std::f64::consts::PI.powf(nf / 2.0) * gamma(-s).abs())
}

/// `α(x,y) = (C^{1/2}/√2) (y−x)/|y−x|^{n/2+s+1}`, zero on the diagonal.
#[derive(Debug, Clone)]
pub struct AlphaKernel {
    n: usize,
    m: usize,
    c_ns: f64,
    data: Vec<f64>,
}

impl AlphaKernel {
    pub fn new(grid: &Grid) -> Self {
        let (m, n, s) = (grid.node_count(), grid.n(), grid.s());
        let c = c_ns(n, s);
        let pre = (c / 2.0).sqrt();
        let expo = n as f64 / 2.0 + s + 1.0;
        let mut data = vec![0.0; m * m * n];
        data.par_chunks_mut(m * n).enumerate().for_each(|(i, row)| {
            let mut d = [0.0; 2];
            for j in 0..m {
                if i == j {
                    continue;
                }
                let r = grid.displacement(i, j, &mut d);
                let f = pre / r.powf(expo);
                for k in 0..n {
                    row[j * n + k] = f * d[k];
                }
            }
        });
        AlphaKernel { n, m, c_ns: c, data }
    }

    pub fn c_ns(&self) -> f64 {
        self.c_ns
    }

    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let k = (i * self.m + j) * self.n;
        &self.data[k..k + self.n]
    }

    /// `|α(i,j)|² = C / (2 |x_i − x_j|^{n+2s})`.
    pub fn norm_sq(&self, i: usize, j: usize) -> f64 {
        self.at(i, j).iter().map(|a| a * a).sum()
    }

    pub fn dot(&self, i: usize, j: usize, v: &[f64]) -> f64 {
        self.at(i, j).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// `∇ˢu(i,j) = (u_i − u_j) α(i,j)`.
pub fn frac_gradient(u: &ScalarField) -> BivariateVectorField {
    let grid = u.grid().clone();
    let alpha = grid.alpha();
    let uv = u.values();
    BivariateVectorField::from_fn(grid.clone(), |i, j, out| {
        let du = uv[i] - uv[j];
        for (o, a) in out.iter_mut().zip(alpha.at(i, j)) {
            *o = du * a;
        }
    })
}

/// Exact discrete adjoint of [`frac_gradient`]:
/// `((∇·)ˢ V)(i) = 2 hⁿ Σ_j V_s(i,j)·α(i,j)`.
pub fn frac_divergence(v: &BivariateVectorField) -> ScalarField {
    let grid = v.grid().clone();
    let alpha = grid.alpha();
    let (m, n, w) = (grid.node_count(), grid.n(), grid.weight());
    let values: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..m {
                let (vij, vji) = (v.at(i, j), v.at(j, i));
                let a = alpha.at(i, j);
                for k in 0..n {
                    acc += (vij[k] + vji[k]) * a[k];
                }
            }
            w * acc
        })
        .collect();
    ScalarField::new(grid, values).expect("finite divergence")
}

/// `∇ˢ_A u(i,j) = (u_i − u_j) α(i,j) + A(i,j) u_i`.
pub fn magnetic_gradient(u: &ScalarField, a: &BivariateVectorField) -> Result<BivariateVectorField> {
    crate::grid::same_grid(u.grid(), a.grid())?;
    let grid = u.grid().clone();
    let alpha = grid.alpha();
    let uv = u.values();
    Ok(BivariateVectorField::from_fn(grid.clone(), |i, j, out| {
        let du = uv[i] - uv[j];
        for ((o, al), av) in out.iter_mut().zip(alpha.at(i, j)).zip(a.at(i, j)) {
            *o = du * al + av * uv[i];
        }
    }))
}

/// Which route produced an operator matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssemblyKind {
    AdjointComposition,
    Expansion,
    SigmaForm,
    Conductivity,
}

/// Dense weak matrix over all box nodes.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    grid: Arc<Grid>,
    kind: AssemblyKind,
    weak: DMatrix<f64>,
}

impl OperatorMatrix {
    pub fn new(grid: Arc<Grid>, kind: AssemblyKind, weak: DMatrix<f64>) -> Self {
        OperatorMatrix { grid, kind, weak }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kind(&self) -> AssemblyKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weak
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.weak
    }

    /// Matrix of the pointwise operator, `K / hⁿ`.
    pub fn pointwise(&self) -> DMatrix<f64> {
        &self.weak / self.grid.weight()
    }

    /// Weak application `K u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(u);
        (&self.weak * v).as_slice().to_vec()
    }

    /// Pointwise application `K u / hⁿ`.
    pub fn apply_pointwise(&self, u: &[f64]) -> Vec<f64> {
        let w = self.grid.weight();
        self.apply(u).into_iter().map(|x| x / w).collect()
    }

    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        self.apply(u).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// `‖K − Kᵀ‖_F / ‖K‖_F`.
    pub fn symmetry_defect(&self) -> f64 {
        crate::linalg::rel_frobenius(&self.weak.transpose(), &self.weak)
    }

    /// `‖self − other‖_F / ‖self‖_F`.
    pub fn relative_distance(&self, other: &OperatorMatrix) -> f64 {
        crate::linalg::rel_frobenius(&other.weak, &self.weak)
    }

    /// CSV triplets `i,j,value` (weak matrix).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_matrix_csv(&self.weak, path)
    }

    /// Binary layout shared with bivariate fields, with one component per pair.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_matrix_binary(&self.weak, path)
    }
}

/// Builds `h²ⁿ Σ_{i,j} θ(i,j) ∇ˢ_A e_a(i,j) · ∇ˢ_A e_b(i,j) + hⁿ q_a δ_ab`
/// row by row. `θ ≡ 1` gives the plain magnetic form.
pub(crate) fn magnetic_form(
    a: &BivariateVectorField,
    q: &[f64],
    theta: Option<&(dyn Fn(usize, usize) -> f64 + Sync)>,
) -> DMatrix<f64> {
    let grid = a.grid();
    let alpha = grid.alpha();
    let (m, n, w) = (grid.node_count(), grid.n(), grid.weight());
    let w2 = w * w;
    let th = |i: usize, j: usize| theta.map_or(1.0, |t| t(i, j));
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|r| {
            let mut row = vec![0.0; m];
            let mut diag = 0.0;
            for b in 0..m {
                let (al, arb, abr) = (alpha.at(r, b), a.at(r, b), a.at(b, r));
                let a2 = alpha.norm_sq(r, b);
                // pair (r, b): gradient of e_r is α + A at (r,b); of e_b is −α.
                let mut plus = 0.0;
                let mut arb_dot = 0.0;
                let mut abr_dot = 0.0;
                for k in 0..n {
                    let g = al[k] + arb[k];
                    plus += g * g;
                    arb_dot += arb[k] * al[k];
                    abr_dot += abr[k] * al[k];
                }
                let (t_rb, t_br) = (th(r, b), th(b, r));
                // pair (r,b) contributes |α+A|² and pair (b,r) contributes |α|².
                diag += t_rb * plus + t_br * a2;
                if b != r {
                    row[b] = -w2 * (t_rb * (a2 + arb_dot) + t_br * (a2 - abr_dot));
                }
            }
            // the b = r iteration added |A(r,r)|² once plus |α(r,r)|² = 0.
            row[r] = w2 * diag + w * q[r];
            row
        })
        .collect();
    DMatrix::from_fn(m, m, |i, j| rows[i][j])
}

/// Direct assembly of the bilinear form of `(−Δ)ˢ_A + q`.
pub fn assemble_bilinear(p: &Potentials) -> OperatorMatrix {
    let weak = magnetic_form(&p.a, p.q.values(), None);
    OperatorMatrix::new(p.grid().clone(), AssemblyKind::AdjointComposition, weak)
}

/// Assembly through `(−Δ)ˢ u + 2∫A_{a∥}·∇ˢu dy + Q u`.
pub fn assemble_expansion(p: &Potentials) -> OperatorMatrix {
    expansion_from_parts(&p.a, p.q.values())
}

/// As [`assemble_expansion`], with `q` allowed to be nonzero off the domain.
pub fn expansion_from_parts(a: &BivariateVectorField, q: &[f64]) -> OperatorMatrix {
    let grid = a.grid().clone();
    let alpha = grid.alpha();
    let (m, w) = (grid.node_count(), grid.weight());
    let w2 = w * w;
    let apar = a.apar();
    let big_q = effective_potential(a, q);
    let qv = big_q.values();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; m];
            let mut diag = 0.0;
            for j in 0..m {
                if j == i {
                    continue;
                }
                // (−Δ)ˢ: 2|α|²(u_i − u_j); coupling: 2 A_{a∥}·α (u_i − u_j).
                let lap = 2.0 * alpha.norm_sq(i, j);
                let coup = 2.0 * alpha.dot(i, j, apar.at(i, j));
                let c = lap + coup;
                diag += c;
                row[j] = -w2 * c;
            }
            row[i] = w2 * diag + w * qv[i];
            row
        })
        .collect();
    OperatorMatrix::new(
        grid,
        AssemblyKind::Expansion,
        DMatrix::from_fn(m, m, |i, j| rows[i][j]),
    )
}

/// `C hⁿ Σ_{j≠i} σ(i,j)(u_i − u_j)/|x_i−x_j|^{n+2s} + Q_i u_i`, in weak form.
pub fn assemble_sigma_form(sigma: &SigmaKernel, big_q: &ScalarField) -> Result<OperatorMatrix> {
    crate::grid::same_grid(sigma.grid(), big_q.grid())?;
    let grid = sigma.grid().clone();
    let (m, n, s, w) = (grid.node_count(), grid.n(), grid.s(), grid.weight());
    let c = c_ns(n, s);
    let expo = n as f64 + 2.0 * s;
    let qv = big_q.values();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; m];
            let mut diag = 0.0;
            for j in 0..m {
                if j == i {
                    continue;
                }
                let k = c * sigma.get(i, j) / grid.distance(i, j).powf(expo);
                diag += k;
                row[j] = -w * w * k;
            }
            row[i] = w * w * diag + w * qv[i];
            row
        })
        .collect();
    Ok(OperatorMatrix::new(
        grid,
        AssemblyKind::SigmaForm,
        DMatrix::from_fn(m, m, |i, j| rows[i][j]),
    ))
}

/// Weak matrix of the truncated fractional Laplacian `(−Δ)ˢ_h`.
pub fn fractional_laplacian(grid: &Arc<Grid>) -> OperatorMatrix {
    assemble_sigma_form(&SigmaKernel::ones(grid.clone()), &ScalarField::zeros(grid.clone()))
        .expect("same grid")
}
