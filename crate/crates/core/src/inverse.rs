//! Integral identity for DN differences, the Runge rank check and linear
//! recovery of `(σ, Q)` from DN data.
//!
//! For `u₁` solving with `(A₁,q₁)` and exterior data `f₁`, and `u₂` solving
//! with `(A₂,q₂)` and data `f₂`,
//!
//! `f₂ᵀ(Λ₁ − Λ₂)f₁ = 2h²ⁿ Σ u₂(x_i)(A₁−A₂)_{a∥}(i,j)·∇ˢu₁(i,j) + hⁿ Σ (Q₁−Q₂) u₁ u₂`.
//!
//! Writing the right side through the σ-kernel makes it linear in
//! `(σ₁ − σ₂, Q₁ − Q₂)` on `Ω×Ω` and `Ω`, which [`recover`] inverts.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{assemble_q, sigma_from_a, Potentials, SigmaKernel};
use crate::grid::{same_grid, ScalarField};
use crate::linalg::{lstsq, numerical_rank};
use crate::operators::{c_ns, frac_gradient};
use crate::solver::{DirichletProblem, DnMatrix};

/// Guard added to the denominator of relative residuals.
pub const RESIDUAL_EPS: f64 = 1e-300;

#[derive(Debug, Clone, Serialize)]
pub struct AlessandriniReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / (|lhs| + |rhs| + ε)`
    pub residual: f64,
}

pub fn alessandrini_residual(
    p1: &Potentials,
    p2: &Potentials,
    f1: &[f64],
    f2: &[f64],
) -> Result<AlessandriniReport> {
    same_grid(p1.grid(), p2.grid())?;
    let (s1, s2) = (DirichletProblem::new(p1)?, DirichletProblem::new(p2)?);
    let (l1, l2) = (s1.dn_schur(), s2.dn_schur());
    let lhs = l1.pairing(f1, f2) - l2.pairing(f1, f2);
    let u1 = s1.solve(f1)?.u;
    let u2 = s2.solve(f2)?.u;
    let rhs = identity_rhs(p1, p2, &u1, &u2);
    Ok(AlessandriniReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + RESIDUAL_EPS),
    })
}

/// Right side of the integral identity for given solutions.
pub fn identity_rhs(p1: &Potentials, p2: &Potentials, u1: &ScalarField, u2: &ScalarField) -> f64 {
    let grid = p1.grid();
    let (m, n, w) = (grid.node_count(), grid.n(), grid.weight());
    let da = p1.a.apar().sub(&p2.a.apar()).expect("same grid");
    let grad = frac_gradient(u1);
    let u2v = u2.values();
    let pair: f64 = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..m {
                let (d, g) = (da.at(i, j), grad.at(i, j));
                let mut dot = 0.0;
                for k in 0..n {
                    dot += d[k] * g[k];
                }
                acc += dot;
            }
            u2v[i] * acc
        })
        .sum();
    let (q1, q2) = (assemble_q(p1), assemble_q(p2));
    let pot: f64 = (0..m)
        .map(|i| (q1.values()[i] - q2.values()[i]) * u1.values()[i] * u2v[i])
        .sum();
    2.0 * w * w * pair + w * pot
}

#[derive(Debug, Clone, Serialize)]
pub struct RungeReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub omega_nodes: usize,
    pub exterior_nodes: usize,
    pub verdict: bool,
    pub note: String,
}

/// Rank of the exterior-data-to-interior-values map `S = −K_II⁻¹ K_IE`.
pub fn runge_rank(p: &Potentials) -> Result<RungeReport> {
    let prob = DirichletProblem::new(p)?;
    let grid = p.grid();
    let (ni, ne) = (grid.interior_nodes().len(), grid.exterior_nodes().len());
    let s = prob.interior_response(&DMatrix::identity(ne, ne));
    let sv: Vec<f64> = s.singular_values().iter().copied().collect();
    let rank = numerical_rank(&sv, 1e-10);
    let verdict = rank == ni;
    let note = if verdict {
        "interior restrictions of solutions span all interior nodal vectors".to_string()
    } else if ne < ni {
        format!("rank is bounded by the {ne} exterior nodes, fewer than the {ni} interior nodes")
    } else {
        format!("numerical rank {rank} is below the {ni} interior nodes")
    };
    Ok(RungeReport {
        singular_values: sv,
        rank,
        omega_nodes: ni,
        exterior_nodes: ne,
        verdict,
        note,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoveryOptions {
    /// Tikhonov weight.
    pub reg: f64,
    /// Singular values below `cutoff · σ_max` are discarded.
    pub cutoff: f64,
    /// Exterior nodes used as data for the unknown side; all when absent.
    pub w1: Option<Vec<usize>>,
    /// Exterior nodes used as data for the reference side; all when absent.
    pub w2: Option<Vec<usize>>,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { reg: 0.0, cutoff: 1e-10, w1: None, w2: None }
    }
}

/// Condition number above which parameter errors are not asserted.
pub const ILL_CONDITIONED: f64 = 1e8;

/// The linear system relating DN differences to `(Dσ, DQ)`.
#[derive(Debug, Clone)]
pub struct RecoverySystem {
    /// Unordered interior pairs `(i, j)`, `i < j`, in lexicographic order.
    pub pairs: Vec<(usize, usize)>,
    pub omega: Vec<usize>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Frobenius norm of the measured DN entries entering `rhs`.
    pub data_norm: f64,
}

fn exterior_positions(all: &[usize], chosen: &Option<Vec<usize>>) -> Result<Vec<usize>> {
    match chosen {
        None => Ok((0..all.len()).collect()),
        Some(nodes) => nodes
            .iter()
            .map(|n| {
                all.binary_search(n)
                    .map_err(|_| Error::InvalidArgument(format!("node {n} is not an exterior node")))
            })
            .collect(),
    }
}

impl RecoverySystem {
    /// `oracle` supplies the solutions on the measured side (inverse-crime mode).
    pub fn build(
        dn_measured: &DnMatrix,
        reference: &Potentials,
        oracle: &Potentials,
        opts: &RecoveryOptions,
    ) -> Result<Self> {
        let grid = reference.grid().clone();
        same_grid(dn_measured.grid(), &grid)?;
        same_grid(oracle.grid(), &grid)?;
        let ref_prob = DirichletProblem::new(reference)?;
        let orc_prob = DirichletProblem::new(oracle)?;
        let dn_ref = ref_prob.dn_schur();
        let ext = grid.exterior_nodes();
        let w1 = exterior_positions(ext, &opts.w1)?;
        let w2 = exterior_positions(ext, &opts.w2)?;
        let ne = ext.len();
        let u1 = orc_prob.interior_response(&DMatrix::identity(ne, ne));
        let u2 = ref_prob.interior_response(&DMatrix::identity(ne, ne));

        let omega = grid.interior_nodes().to_vec();
        let ni = omega.len();
        let mut pairs = Vec::with_capacity(ni * (ni - 1) / 2);
        for a in 0..ni {
            for b in a + 1..ni {
                pairs.push((a, b));
            }
        }
        let (n, s, w) = (grid.n(), grid.s(), grid.weight());
        let c = c_ns(n, s);
        let kernel: Vec<f64> = pairs
            .iter()
            .map(|&(a, b)| w * w * c / grid.distance(omega[a], omega[b]).powf(n as f64 + 2.0 * s))
            .collect();

        let combos: Vec<(usize, usize)> =
            w1.iter().flat_map(|&a| w2.iter().map(move |&b| (a, b))).collect();
        let unknowns = pairs.len() + ni;
        let rows: Vec<(Vec<f64>, f64)> = combos
            .par_iter()
            .map(|&(a, b)| {
                let mut row = vec![0.0; unknowns];
                let (x, y) = (u1.column(a), u2.column(b));
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    row[k] = kernel[k] * (y[i] * (x[i] - x[j]) + y[j] * (x[j] - x[i]));
                }
                for i in 0..ni {
                    row[pairs.len() + i] = w * x[i] * y[i];
                }
                (row, dn_measured.matrix[(b, a)] - dn_ref.matrix[(b, a)])
            })
            .collect();
        let matrix = DMatrix::from_fn(rows.len(), unknowns, |r, k| rows[r].0[k]);
        let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let data_norm = combos
            .iter()
            .map(|&(a, b)| dn_measured.matrix[(b, a)].powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(RecoverySystem { pairs, omega, matrix, rhs, data_norm })
    }

    /// Unknown vector `(Dσ on pairs, DQ on Ω)` between two potential pairs.
    pub fn parameters(&self, measured: &Potentials, reference: &Potentials) -> Result<DVector<f64>> {
        let (s1, s2) = (sigma_from_a(&measured.a)?, sigma_from_a(&reference.a)?);
        let (q1, q2) = (assemble_q(measured), assemble_q(reference));
        let om = &self.omega;
        let it = self
            .pairs
            .iter()
            .map(|&(a, b)| s1.get(om[a], om[b]) - s2.get(om[a], om[b]))
            .chain(om.iter().map(|&i| q1.values()[i] - q2.values()[i]));
        Ok(DVector::from_iterator(self.pairs.len() + om.len(), it))
    }

    /// `‖M x − b‖ / ‖b‖` (absolute when `b = 0`).
    pub fn residual_at(&self, x: &DVector<f64>) -> f64 {
        let r = (&self.matrix * x - &self.rhs).norm();
        let nb = self.rhs.norm();
        if nb > 0.0 {
            r / nb
        } else {
            r
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryResult {
    /// Interior node indices defining the unknowns.
    pub omega: Vec<usize>,
    /// Node-index pairs `(i, j)`, `i < j`, carrying `σ` unknowns.
    pub pairs: Vec<(usize, usize)>,
    pub d_sigma: Vec<f64>,
    pub d_q: Vec<f64>,
    /// `σ_ref + Dσ` on the pairs.
    pub sigma: Vec<f64>,
    /// `Q_ref + DQ` on `Ω`.
    pub q: Vec<f64>,
    pub data_fit_residual: f64,
    /// `‖Λ_meas − Λ_ref‖ / ‖Λ_meas‖` over the selected entries. At round-off
    /// level the data carry no information and the fit residual is noise.
    pub data_difference: f64,
    pub parameter_error: Option<f64>,
    pub condition: f64,
    pub rank: usize,
    pub unknowns: usize,
    pub equations: usize,
    pub reg: f64,
    pub ill_conditioned: bool,
    #[serde(skip)]
    grid: std::sync::Arc<crate::grid::Grid>,
}

impl RecoveryResult {
    /// Recovered kernel on all pairs; 1 off `Ω×Ω` and on the diagonal.
    pub fn sigma_kernel(&self) -> Result<SigmaKernel> {
        let m = self.grid.node_count();
        let mut v = vec![1.0; m * m];
        for (&(i, j), &s) in self.pairs.iter().zip(&self.sigma) {
            v[i * m + j] = s;
            v[j * m + i] = s;
        }
        SigmaKernel::new(self.grid.clone(), v)
    }

    /// Recovered effective potential; 0 off `Ω`.
    pub fn q_field(&self) -> Result<ScalarField> {
        let mut v = vec![0.0; self.grid.node_count()];
        for (&i, &q) in self.omega.iter().zip(&self.q) {
            v[i] = q;
        }
        ScalarField::new(self.grid.clone(), v)
    }

    pub fn max_abs_change(&self) -> f64 {
        self.d_sigma.iter().chain(&self.d_q).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Linear recovery of `(σ, Q)` on `Ω×Ω` and `Ω` from a measured DN matrix.
pub fn recover(
    dn_measured: &DnMatrix,
    reference: &Potentials,
    oracle: &Potentials,
    truth: Option<&Potentials>,
    opts: &RecoveryOptions,
) -> Result<RecoveryResult> {
    if !(opts.reg >= 0.0) || !(opts.cutoff >= 0.0) {
        return Err(Error::InvalidArgument("reg and cutoff must be nonnegative".into()));
    }
    let sys = RecoverySystem::build(dn_measured, reference, oracle, opts)?;
    let sol = lstsq(&sys.matrix, &sys.rhs, opts.reg, opts.cutoff);
    let np = sys.pairs.len();
    let grid = reference.grid().clone();
    let sref = sigma_from_a(&reference.a)?;
    let qref = assemble_q(reference);
    let om = &sys.omega;
    let d_sigma: Vec<f64> = sol.x.rows(0, np).iter().copied().collect();
    let d_q: Vec<f64> = sol.x.rows(np, om.len()).iter().copied().collect();
    let pairs: Vec<(usize, usize)> = sys.pairs.iter().map(|&(a, b)| (om[a], om[b])).collect();
    let sigma = pairs.iter().zip(&d_sigma).map(|(&(i, j), d)| sref.get(i, j) + d).collect();
    let q = om.iter().zip(&d_q).map(|(&i, d)| qref.values()[i] + d).collect();
    let parameter_error = match truth {
        Some(t) => {
            let xt = sys.parameters(t, reference)?;
            let err = (&sol.x - &xt).norm();
            let nt = xt.norm();
            Some(if nt > 0.0 { err / nt } else { err })
        }
        None => None,
    };
    Ok(RecoveryResult {
        omega: om.clone(),
        pairs,
        d_sigma,
        d_q,
        sigma,
        q,
        data_fit_residual: sys.residual_at(&sol.x),
        data_difference: sys.rhs.norm() / sys.data_norm.max(f64::MIN_POSITIVE),
        parameter_error,
        condition: sol.condition,
        rank: sol.rank,
        unknowns: sys.matrix.ncols(),
        equations: sys.matrix.nrows(),
        reg: opts.reg,
        ill_conditioned: sol.condition > ILL_CONDITIONED,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::gauge_partner;
    use crate::grid::{build_grid, GridConfig};
    use crate::presets::{self, RandomSpec};
    use crate::solver::assemble_dn;

    fn grid1() -> std::sync::Arc<crate::grid::Grid> {
        build_grid(&GridConfig::interval(0.5, -1.0, 1.0, 16, -0.45, 0.45)).unwrap()
    }

    fn data(g: &std::sync::Arc<crate::grid::Grid>, seed: u64) -> Vec<f64> {
        let u = presets::random_scalar(g, seed, 1.0);
        g.exterior_nodes().iter().map(|&e| u.values()[e]).collect()
    }

    #[test]
    fn identity_vanishes_for_equal_potentials() {
        let g = grid1();
        let p = presets::random_admissible(&g, 1, &RandomSpec::default());
        let r = alessandrini_residual(&p, &p, &data(&g, 2), &data(&g, 3)).unwrap();
        assert_eq!((r.lhs, r.rhs, r.residual), (0.0, 0.0, 0.0));
    }

    #[test]
    fn identity_holds_for_random_pairs() {
        let g = grid1();
        for seed in 0..5 {
            let p1 = presets::random_admissible(&g, seed, &RandomSpec::default());
            let p2 = presets::random_admissible(&g, seed + 100, &RandomSpec::default());
            let r = alessandrini_residual(&p1, &p2, &data(&g, seed), &data(&g, seed + 7)).unwrap();
            assert!(r.residual < 1e-10, "{r:?}");
            assert!(r.lhs.abs() > 1e-8);
        }
    }

    #[test]
    fn runge_rank_full_and_bounded() {
        let cfg = GridConfig::interval(0.5, -1.0, 1.0, 9, -0.3, 0.3);
        let g = build_grid(&cfg).unwrap();
        assert_eq!(g.interior_nodes().len(), 3);
        let r = runge_rank(&Potentials::zero(g.clone())).unwrap();
        assert!(r.verdict && r.rank == 3);
        // 5 interior nodes, 4 exterior nodes
        let g = build_grid(&GridConfig::interval(0.5, 0.0, 8.0, 9, 1.5, 6.5)).unwrap();
        assert!(g.exterior_nodes().len() < g.interior_nodes().len());
        let r = runge_rank(&Potentials::zero(g.clone())).unwrap();
        assert!(!r.verdict && r.rank <= g.exterior_nodes().len());
        assert!(r.note.contains("bounded"));
    }

    #[test]
    fn recovery_from_own_data_is_zero() {
        let g = grid1();
        let reference = Potentials::zero(g.clone());
        let dn = assemble_dn(&reference).unwrap();
        let r = recover(&dn, &reference, &reference, None, &RecoveryOptions::default()).unwrap();
        assert!(r.max_abs_change() < 1e-8);
        assert!(r.sigma_kernel().unwrap().is_admissible());
    }

    #[test]
    fn linear_model_is_consistent_with_the_identity() {
        let g = grid1();
        let truth = presets::random_admissible(&g, 3, &RandomSpec::default());
        let reference = presets::random_admissible(&g, 4, &RandomSpec::default());
        let dn = assemble_dn(&truth).unwrap();
        let sys = RecoverySystem::build(&dn, &reference, &truth, &RecoveryOptions::default()).unwrap();
        let x = sys.parameters(&truth, &reference).unwrap();
        assert!(sys.residual_at(&x) < 1e-10);
    }

    #[test]
    fn gauge_partner_data_recovers_nothing() {
        let g = build_grid(&GridConfig::square_with_disk(0.5, -1.0, 1.0, 8, 0.45)).unwrap();
        let reference = presets::random_admissible(&g, 5, &RandomSpec::default());
        let partner = gauge_partner(&reference).unwrap();
        let dn = assemble_dn(&partner).unwrap();
        let r = recover(&dn, &reference, &partner, Some(&partner), &RecoveryOptions::default())
            .unwrap();
        assert!(r.max_abs_change() < 1e-8, "{}", r.max_abs_change());
    }

    #[test]
    fn more_exterior_pairs_never_lower_the_rank() {
        let g = grid1();
        let truth = presets::random_admissible(&g, 6, &RandomSpec::default());
        let reference = Potentials::zero(g.clone());
        let dn = assemble_dn(&truth).unwrap();
        let ext = g.exterior_nodes().to_vec();
        let mut last = 0;
        for k in [1, 2, 4, ext.len()] {
            let opts = RecoveryOptions {
                w1: Some(ext[..k].to_vec()),
                w2: Some(ext[..k].to_vec()),
                ..Default::default()
            };
            let r = recover(&dn, &reference, &truth, None, &opts).unwrap();
            assert!(r.rank >= last);
            last = r.rank;
        }
        let bad = RecoveryOptions { w1: Some(vec![g.interior_nodes()[0]]), ..Default::default() };
        assert!(recover(&dn, &reference, &truth, None, &bad).is_err());
    }
}
