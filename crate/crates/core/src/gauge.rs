//! Gauge relations between potential pairs.
//!
//! `(A,q) ∼ (A′,q′)` means the two operators coincide, which happens exactly
//! when `A_{a∥} = A′_{a∥}` and `Q = Q′`. The conjugation gauge `≈` by a
//! positive `φ` equal to 1 off `Ω` is measured by [`approx_gauge_residual`].

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{assemble_q, effective_potential, BivariateVectorField, Part, Potentials};
use crate::grid::{same_grid, ScalarField};
use crate::operators::{assemble_bilinear, assemble_expansion};

/// Relative tolerance for gauge verdicts.
pub const GAUGE_TOLERANCE: f64 = 1e-10;

/// `(a₁, a₂) ↦ (−a₂, a₁)` on every pair.
fn rotate(a: &BivariateVectorField) -> BivariateVectorField {
    BivariateVectorField::from_fn(a.grid().clone(), |i, j, out| {
        let v = a.at(i, j);
        out[0] = -v[1];
        out[1] = v[0];
    })
}

/// Builds `(A′, q′) ∼ (A, q)` with `A′ ≠ A`: `A′ = A_∥ − A_⊥` when the
/// perpendicular part is nonzero, otherwise `A′ = A_∥ + R A_∥` (n = 2 only).
/// `q′` is chosen so that the effective potentials agree.
pub fn gauge_partner(p: &Potentials) -> Result<Potentials> {
    let scale = p.a.max_abs();
    if scale == 0.0 {
        return Err(Error::NoGaugePartner("A vanishes identically".into()));
    }
    let par = p.a.part(Part::Parallel);
    let perp = p.a.part(Part::Perpendicular);
    let a_new = if perp.max_abs() > 1e-12 * scale {
        par.sub(&perp)?
    } else if p.grid().n() == 2 {
        par.add(&rotate(&par))?
    } else {
        return Err(Error::NoGaugePartner(
            "A has no perpendicular part and n = 1 admits no rotation".into(),
        ));
    };
    let q_big = assemble_q(p);
    let shift = effective_potential(&a_new, &vec![0.0; p.grid().node_count()]);
    let q_new: Vec<f64> = q_big.values().iter().zip(shift.values()).map(|(a, b)| a - b).collect();
    Potentials::new(a_new, ScalarField::new(p.grid().clone(), q_new)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeReport {
    /// `max |A_{a∥} − A′_{a∥}|`
    pub a_apar_match: f64,
    /// `max |Q − Q′|`
    pub q_match: f64,
    /// Relative Frobenius distance of the expansion matrices.
    pub operator_match: f64,
    pub tolerance: f64,
    pub verdict: bool,
    /// Whether the operator comparison agrees with the verdict.
    pub consistent: bool,
}

pub fn is_sim_equivalent(p1: &Potentials, p2: &Potentials) -> Result<GaugeReport> {
    same_grid(p1.grid(), p2.grid())?;
    let (ap1, ap2) = (p1.a.apar(), p2.a.apar());
    let a_apar_match = ap1.max_abs_diff(&ap2)?;
    let (q1, q2) = (assemble_q(p1), assemble_q(p2));
    let q_match = q1.max_abs_diff(&q2)?;
    let operator_match = assemble_expansion(p1).relative_distance(&assemble_expansion(p2));
    let tol = GAUGE_TOLERANCE;
    let verdict = a_apar_match <= tol * ap1.max_abs().max(1.0)
        && q_match <= tol * q1.max_abs().max(1.0);
    Ok(GaugeReport {
        a_apar_match,
        q_match,
        operator_match,
        tolerance: tol,
        verdict,
        consistent: (operator_match <= tol) == verdict,
    })
}

/// `max_i ‖K₁(φ e_i) − φ·(K₂ e_i)‖₂` with `K` the weak matrices including `q`.
pub fn approx_gauge_residual(p1: &Potentials, p2: &Potentials, phi: &ScalarField) -> Result<f64> {
    same_grid(p1.grid(), p2.grid())?;
    same_grid(p1.grid(), phi.grid())?;
    let grid = p1.grid();
    for (i, &v) in phi.values().iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::InvalidGaugeFunction(format!("φ({i}) = {v} is not positive")));
        }
        if !grid.is_interior(i) && v != 1.0 {
            return Err(Error::InvalidGaugeFunction(format!(
                "φ({i}) = {v} but φ must equal 1 off the domain"
            )));
        }
    }
    let (k1, k2) = (assemble_bilinear(p1), assemble_bilinear(p2));
    Ok(conjugation_residual(k1.matrix(), k2.matrix(), phi.values()))
}

fn conjugation_residual(k1: &DMatrix<f64>, k2: &DMatrix<f64>, phi: &[f64]) -> f64 {
    (0..phi.len())
        .into_par_iter()
        .map(|i| {
            (0..phi.len())
                .map(|r| {
                    let d = k1[(r, i)] * phi[i] - phi[r] * k2[(r, i)];
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{j_norm_field, Variable};
    use crate::grid::{build_grid, GridConfig};
    use crate::presets::{self, RandomSpec};
    use crate::solver::assemble_dn;

    fn grid2() -> std::sync::Arc<crate::grid::Grid> {
        build_grid(&GridConfig::square_with_disk(0.5, -1.0, 1.0, 8, 0.55)).unwrap()
    }

    #[test]
    fn perpendicular_branch() {
        let g = grid2();
        let p = presets::random_admissible(&g, 1, &RandomSpec::default());
        let pp = gauge_partner(&p).unwrap();
        assert!(pp.a.max_abs_diff(&p.a).unwrap() > 1e-3);
        let d = j_norm_field(&pp.a, Variable::Second)
            .max_abs_diff(&j_norm_field(&p.a, Variable::Second))
            .unwrap();
        assert!(d < 1e-12);
        let rep = is_sim_equivalent(&p, &pp).unwrap();
        assert!(rep.verdict && rep.consistent, "{rep:?}");
        let (l1, l2) = (assemble_dn(&p).unwrap(), assemble_dn(&pp).unwrap());
        assert!(l1.relative_distance(&l2) < 1e-10);
    }

    #[test]
    fn rotation_branch() {
        let g = grid2();
        let base = presets::random_admissible(&g, 2, &RandomSpec::default());
        let p = Potentials::new(base.a.part(Part::Parallel), base.q.clone()).unwrap();
        let pp = gauge_partner(&p).unwrap();
        let j = j_norm_field(&p.a, Variable::Second);
        let jp = j_norm_field(&pp.a, Variable::Second);
        for (a, b) in j.values().iter().zip(jp.values()) {
            assert!((b - std::f64::consts::SQRT_2 * a).abs() < 1e-12 * a.max(1.0));
        }
        assert!(is_sim_equivalent(&p, &pp).unwrap().verdict);
    }

    #[test]
    fn partner_errors() {
        let g = grid2();
        assert!(matches!(gauge_partner(&Potentials::zero(g)), Err(Error::NoGaugePartner(_))));
        let g1 = build_grid(&GridConfig::interval(0.5, -1.0, 1.0, 12, -0.5, 0.5)).unwrap();
        let p = presets::random_admissible(&g1, 1, &RandomSpec::default());
        assert!(matches!(gauge_partner(&p), Err(Error::NoGaugePartner(_))));
    }

    #[test]
    fn sim_is_an_equivalence_and_detects_q_bumps() {
        let g = grid2();
        let p = presets::random_admissible(&g, 3, &RandomSpec::default());
        let r = is_sim_equivalent(&p, &p).unwrap();
        assert!(r.verdict && r.a_apar_match == 0.0 && r.q_match == 0.0 && r.operator_match == 0.0);
        let pp = gauge_partner(&p).unwrap();
        let ppp = gauge_partner(&pp).unwrap();
        assert!(is_sim_equivalent(&pp, &p).unwrap().verdict);
        assert!(is_sim_equivalent(&p, &ppp).unwrap().verdict);

        let mut q = p.q.values().to_vec();
        let k = g.interior_nodes()[1];
        q[k] += 0.25;
        let bumped = Potentials::new(p.a.clone(), ScalarField::new(g.clone(), q).unwrap()).unwrap();
        let r = is_sim_equivalent(&p, &bumped).unwrap();
        assert!(!r.verdict && r.consistent);
        assert!((r.q_match - 0.25).abs() < 1e-14);
    }

    #[test]
    fn conjugation_gauge_fails_for_nonconstant_phi() {
        let g = grid2();
        let p = presets::random_admissible(&g, 4, &RandomSpec::default());
        let pp = gauge_partner(&p).unwrap();
        let one = ScalarField::constant(g.clone(), 1.0);
        let base = approx_gauge_residual(&p, &pp, &one).unwrap();
        assert!(base < 1e-10);
        let phi = presets::random_gauge_function(&g, 5, 0.5);
        let mut prev = f64::INFINITY;
        for t in [1.0, 0.1, 0.01] {
            let phit = phi.map(|v| 1.0 + t * (v - 1.0)).unwrap();
            let r = approx_gauge_residual(&p, &p, &phit).unwrap();
            assert!(r > 0.0 && r < prev);
            prev = r;
        }
        assert!(approx_gauge_residual(&p, &pp, &phi).unwrap() > 1e3 * base.max(1e-16));
    }

    #[test]
    fn rejects_phi_outside_the_gauge_group() {
        let g = grid2();
        let p = Potentials::zero(g.clone());
        let mut v = vec![1.0; g.node_count()];
        v[g.exterior_nodes()[0]] = 1.1;
        let phi = ScalarField::new(g.clone(), v).unwrap();
        assert!(matches!(approx_gauge_residual(&p, &p, &phi), Err(Error::InvalidGaugeFunction(_))));
        let mut v = vec![1.0; g.node_count()];
        v[g.interior_nodes()[0]] = 0.0;
        let phi = ScalarField::new(g.clone(), v).unwrap();
        assert!(approx_gauge_residual(&p, &p, &phi).is_err());
    }
}
