use nalgebra::DMatrix;
use serde::Serialize;

use super::{frac_divergence, frac_gradient, magnetic_form, AssemblyKind, OperatorMatrix};
use crate::error::{Error, Result};
use crate::fields::{BivariateVectorField, Potentials};
use crate::grid::{same_grid, ScalarField};

fn check_gamma(gamma: &ScalarField) -> Result<Vec<f64>> {
    let grid = gamma.grid();
    for (i, &g) in gamma.values().iter().enumerate() {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::InvalidConductivity(format!("γ({i}) = {g} is not positive")));
        }
        if !grid.is_interior(i) && (g - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConductivity(format!(
                "γ({i}) = {g} but γ must equal 1 off the domain"
            )));
        }
    }
    Ok(gamma.values().iter().map(|g| g.sqrt()).collect())
}

/// Weak matrix of `u ↦ (∇·)ˢ_A(Θ·∇ˢ_A u) + q u` with `Θ(x,y) = (γ(x)γ(y))^{1/2}`.
pub fn conductivity_matrix(gamma: &ScalarField, p: &Potentials) -> Result<OperatorMatrix> {
    same_grid(gamma.grid(), p.grid())?;
    let g = check_gamma(gamma)?;
    let theta = |i: usize, j: usize| g[i] * g[j];
    let weak = magnetic_form(&p.a, p.q.values(), Some(&theta));
    Ok(OperatorMatrix::new(p.grid().clone(), AssemblyKind::Conductivity, weak))
}

/// The individual terms of the reduced potential `q′`, one value per node.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionTerms {
    /// `q/γ`
    pub q_over_gamma: Vec<f64>,
    /// `−(∇·)ˢ A_{s∥}`
    pub minus_div_a: Vec<f64>,
    /// `(∇·)ˢ(A γ^{1/2}(y)) / γ^{1/2}(x)`
    pub div_weighted_a: Vec<f64>,
    /// `−(−Δ)ˢ(γ^{1/2}) / γ^{1/2}`
    pub minus_laplacian: Vec<f64>,
    /// `∫ (−∇ˢγ^{1/2}·A/γ^{1/2}(x) + |A|²(γ^{1/2}(y)/γ^{1/2}(x) − 1)) dy`
    pub integral: Vec<f64>,
    pub q_prime: Vec<f64>,
}

/// Every term of `q′` evaluated with the discrete operators of this module.
pub fn reduction_terms(gamma: &ScalarField, p: &Potentials) -> Result<ReductionTerms> {
    same_grid(gamma.grid(), p.grid())?;
    let g = check_gamma(gamma)?;
    let grid = p.grid().clone();
    let (m, n, w) = (grid.node_count(), grid.n(), grid.weight());
    let sqrt_g = ScalarField::new(grid.clone(), g.clone())?;

    let q_over_gamma: Vec<f64> =
        p.q.values().iter().zip(gamma.values()).map(|(q, gm)| q / gm).collect();
    let minus_div_a: Vec<f64> =
        frac_divergence(&p.a.spar()).values().iter().map(|v| -v).collect();

    let mut weighted = BivariateVectorField::zeros(grid.clone());
    for i in 0..m {
        for j in 0..m {
            let src = p.a.at(i, j).to_vec();
            for (o, a) in weighted.at_mut(i, j).iter_mut().zip(src) {
                *o = a * g[j];
            }
        }
    }
    let div_weighted_a: Vec<f64> = frac_divergence(&weighted.spar())
        .values()
        .iter()
        .zip(&g)
        .map(|(d, gi)| d / gi)
        .collect();

    let grad_g = frac_gradient(&sqrt_g);
    let minus_laplacian: Vec<f64> = frac_divergence(&grad_g)
        .values()
        .iter()
        .zip(&g)
        .map(|(d, gi)| -d / gi)
        .collect();

    let integral: Vec<f64> = (0..m)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..m {
                let (gr, a) = (grad_g.at(i, j), p.a.at(i, j));
                let mut dot = 0.0;
                let mut a2 = 0.0;
                for k in 0..n {
                    dot += gr[k] * a[k];
                    a2 += a[k] * a[k];
                }
                acc += -dot / g[i] + a2 * (g[j] / g[i] - 1.0);
            }
            w * acc
        })
        .collect();

    let q_prime = (0..m)
        .map(|i| {
            q_over_gamma[i]
                + (((minus_div_a[i] + div_weighted_a[i]) + minus_laplacian[i]) + integral[i])
        })
        .collect();
    Ok(ReductionTerms {
        q_over_gamma,
        minus_div_a,
        div_weighted_a,
        minus_laplacian,
        integral,
        q_prime,
    })
}

/// Reduced potential `q′` such that the conductivity operator with `(A,q)`
/// conjugated by `γ^{1/2}` equals the magnetic Schrödinger operator with `(A,q′)`.
pub fn reduction_qprime(gamma: &ScalarField, p: &Potentials) -> Result<ScalarField> {
    let t = reduction_terms(gamma, p)?;
    ScalarField::new(p.grid().clone(), t.q_prime)
}

/// `‖K_γ Γ⁻¹ − Γ K_{A,q′}‖_F / ‖K_γ Γ⁻¹‖_F` with `Γ = diag(γ^{1/2})`.
pub fn reduction_residual(gamma: &ScalarField, p: &Potentials) -> Result<f64> {
    let qp = reduction_qprime(gamma, p)?;
    let g = check_gamma(gamma)?;
    let kc = conductivity_matrix(gamma, p)?;
    let ke = super::expansion_from_parts(&p.a, qp.values());
    let lhs = DMatrix::from_fn(g.len(), g.len(), |r, c| kc.matrix()[(r, c)] / g[c]);
    let rhs = DMatrix::from_fn(g.len(), g.len(), |r, c| g[r] * ke.matrix()[(r, c)]);
    Ok(crate::linalg::rel_frobenius(&rhs, &lhs))
}
