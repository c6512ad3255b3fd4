//! Exterior Dirichlet problem and the discrete Dirichlet-to-Neumann map.
//!
//! With `I` the nodes of `Ω` and `E` the exterior nodes of the box, the weak
//! matrix `K` of `(−Δ)ˢ_A + q` splits into blocks and the solution with
//! exterior data `f` is `u_I = −K_II⁻¹ K_IE f`. The DN map is the Schur
//! complement `Λ = K_EE − K_EI K_II⁻¹ K_IE`, so `gᵀ Λ f = B[u_f, g]`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::Potentials;
use crate::grid::{parse_field, Grid, ScalarField};
use crate::linalg::{rel_frobenius, Factorized};
use crate::operators::{assemble_bilinear, OperatorMatrix};

/// Largest accepted 1-norm condition number of `K_II`.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct DirichletSolution {
    pub u: ScalarField,
    /// Exterior data in the order of [`Grid::exterior_nodes`].
    pub f: Vec<f64>,
    /// `‖(K u)_I‖ / (‖K_II u_I‖ + ‖K_IE f‖)`.
    pub residual: f64,
    pub condition: f64,
    /// `‖u‖ / ‖f‖` in the grid norm; 0 when `f = 0`.
    pub norm_ratio: f64,
}

/// A factored Dirichlet problem, reusable across exterior data.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    grid: Arc<Grid>,
    k: DMatrix<f64>,
    interior: Vec<usize>,
    exterior: Vec<usize>,
    k_ie: DMatrix<f64>,
    factor: Factorized,
    provenance: String,
}

fn block(k: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| k[(rows[a], cols[b])])
}

impl DirichletProblem {
    pub fn new(p: &Potentials) -> Result<Self> {
        Self::from_operator(&assemble_bilinear(p), p.fingerprint())
    }

    /// Uses an already assembled weak matrix; `provenance` labels its source.
    pub fn from_operator(op: &OperatorMatrix, provenance: String) -> Result<Self> {
        let grid = op.grid().clone();
        let interior = grid.interior_nodes().to_vec();
        let exterior = grid.exterior_nodes().to_vec();
        let k = op.matrix().clone();
        let factor = Factorized::new(&block(&k, &interior, &interior), CONDITION_LIMIT)?;
        let k_ie = block(&k, &interior, &exterior);
        Ok(DirichletProblem { grid, k, interior, exterior, k_ie, factor, provenance })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn condition(&self) -> f64 {
        self.factor.condition
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// `B[u, v] = vᵀ K u`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let (u, v) = (DVector::from_column_slice(u), DVector::from_column_slice(v));
        v.dot(&(&self.k * u))
    }

    /// Interior values `−K_II⁻¹ K_IE F` for a block of exterior data columns.
    pub fn interior_response(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        -self.factor.solve(&(&self.k_ie * f))
    }

    pub fn solve(&self, f: &[f64]) -> Result<DirichletSolution> {
        if f.len() != self.exterior.len() {
            return Err(Error::ShapeMismatch {
                expected: self.exterior.len(),
                actual: f.len(),
            });
        }
        if let Some(k) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        let fv = DVector::from_column_slice(f);
        let rhs = &self.k_ie * &fv;
        let ui = -self.factor.solve_vec(&rhs);
        let mut u = vec![0.0; self.grid.node_count()];
        for (a, &i) in self.interior.iter().enumerate() {
            u[i] = ui[a];
        }
        for (b, &e) in self.exterior.iter().enumerate() {
            u[e] = f[b];
        }
        let ku = &self.k * DVector::from_column_slice(&u);
        let res: f64 = self.interior.iter().map(|&i| ku[i] * ku[i]).sum::<f64>().sqrt();
        let scale = rhs.norm() + self.k_ii_apply(&ui).norm();
        let w = self.grid.weight();
        let fnorm = (w * fv.norm_squared()).sqrt();
        let unorm = (w * u.iter().map(|v| v * v).sum::<f64>()).sqrt();
        Ok(DirichletSolution {
            u: ScalarField::new(self.grid.clone(), u)?,
            f: f.to_vec(),
            residual: if scale > 0.0 { res / scale } else { res },
            condition: self.factor.condition,
            norm_ratio: if fnorm > 0.0 { unorm / fnorm } else { 0.0 },
        })
    }

    fn k_ii_apply(&self, ui: &DVector<f64>) -> DVector<f64> {
        block(&self.k, &self.interior, &self.interior) * ui
    }

    /// DN map through the Schur complement.
    pub fn dn_schur(&self) -> DnMatrix {
        let k_ee = block(&self.k, &self.exterior, &self.exterior);
        let k_ei = block(&self.k, &self.exterior, &self.interior);
        let lambda = k_ee - k_ei * self.factor.solve(&self.k_ie);
        self.dn_from(lambda)
    }

    /// DN map column by column: `Λ[a][b] = B[u_{e_b}, e_a]`.
    pub fn dn_columns(&self) -> DnMatrix {
        let ne = self.exterior.len();
        let cols: Vec<Vec<f64>> = (0..ne)
            .into_par_iter()
            .map(|b| {
                let mut f = vec![0.0; ne];
                f[b] = 1.0;
                let u = self.solve(&f).expect("validated data").u;
                let ku = &self.k * DVector::from_column_slice(u.values());
                self.exterior.iter().map(|&e| ku[e]).collect()
            })
            .collect();
        self.dn_from(DMatrix::from_fn(ne, ne, |a, b| cols[b][a]))
    }

    fn dn_from(&self, matrix: DMatrix<f64>) -> DnMatrix {
        DnMatrix {
            grid: self.grid.clone(),
            matrix,
            exterior: self.exterior.clone(),
            potentials_hash: self.provenance.clone(),
            grid_hash: self.grid.fingerprint(),
        }
    }
}

pub fn solve_dirichlet(p: &Potentials, f: &[f64]) -> Result<DirichletSolution> {
    DirichletProblem::new(p)?.solve(f)
}

pub fn assemble_dn(p: &Potentials) -> Result<DnMatrix> {
    Ok(DirichletProblem::new(p)?.dn_schur())
}

/// Discrete DN map, indexed by exterior nodes.
#[derive(Debug, Clone)]
pub struct DnMatrix {
    grid: Arc<Grid>,
    pub matrix: DMatrix<f64>,
    pub exterior: Vec<usize>,
    pub potentials_hash: String,
    pub grid_hash: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DnSummary {
    pub size: usize,
    pub potentials_hash: String,
    pub grid_hash: String,
    pub symmetry_defect: f64,
    pub frobenius_norm: f64,
}

impl DnMatrix {
    /// Wraps a matrix read from disk; rows and columns follow
    /// [`Grid::exterior_nodes`].
    pub fn from_matrix(grid: Arc<Grid>, matrix: DMatrix<f64>, provenance: String) -> Result<Self> {
        let ne = grid.exterior_nodes().len();
        if matrix.nrows() != ne || matrix.ncols() != ne {
            return Err(Error::ShapeMismatch {
                expected: ne * ne,
                actual: matrix.len(),
            });
        }
        Ok(DnMatrix {
            exterior: grid.exterior_nodes().to_vec(),
            grid_hash: grid.fingerprint(),
            grid,
            matrix,
            potentials_hash: provenance,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.exterior.len()
    }

    pub fn symmetry_defect(&self) -> f64 {
        rel_frobenius(&self.matrix.transpose(), &self.matrix)
    }

    /// `‖self − other‖_F / ‖self‖_F`.
    pub fn relative_distance(&self, other: &DnMatrix) -> f64 {
        rel_frobenius(&other.matrix, &self.matrix)
    }

    /// `gᵀ Λ f`.
    pub fn pairing(&self, f: &[f64], g: &[f64]) -> f64 {
        DVector::from_column_slice(g).dot(&(&self.matrix * DVector::from_column_slice(f)))
    }

    pub fn summary(&self) -> DnSummary {
        DnSummary {
            size: self.size(),
            potentials_hash: self.potentials_hash.clone(),
            grid_hash: self.grid_hash.clone(),
            symmetry_defect: self.symmetry_defect(),
            frobenius_norm: self.matrix.norm(),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_matrix_csv(&self.matrix, path)
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_matrix_binary(&self.matrix, path)
    }

    /// Legend `row, node_index, coord_1..coord_n` for the CSV/binary dumps.
    pub fn write_legend(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["row".to_string(), "node_index".to_string()];
        header.extend((1..=self.grid.n()).map(|k| format!("coord_{k}")));
        w.write_record(&header)?;
        for (r, &e) in self.exterior.iter().enumerate() {
            let mut rec = vec![r.to_string(), e.to_string()];
            rec.extend(self.grid.coord(e).iter().map(|c| format!("{c:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads exterior data as CSV rows `exterior_node_index, value`; unlisted
/// exterior nodes get 0. Returns values in exterior-node order.
pub fn read_exterior_csv(grid: &Grid, path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut f = vec![0.0; grid.exterior_nodes().len()];
    let mut r = csv::Reader::from_path(path)?;
    for rec in r.records() {
        let rec = rec?;
        let node: usize = parse_field(&rec, 0)?;
        let value: f64 = parse_field(&rec, 1)?;
        let pos = grid
            .exterior_nodes()
            .binary_search(&node)
            .map_err(|_| Error::Format(format!("node {node} is not an exterior node")))?;
        if !value.is_finite() {
            return Err(Error::NonFinite(node));
        }
        f[pos] = value;
    }
    Ok(f)
}

pub fn write_exterior_csv(grid: &Grid, f: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["exterior_node_index", "value"])?;
    for (&e, v) in grid.exterior_nodes().iter().zip(f) {
        w.write_record([e.to_string(), format!("{v:e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};
    use crate::presets::{self, RandomSpec};

    fn grid() -> Arc<Grid> {
        build_grid(&GridConfig::interval(0.5, -1.0, 1.0, 14, -0.5, 0.5)).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let g = grid();
        let p = presets::random_admissible(&g, 1, &RandomSpec::default());
        let sol = solve_dirichlet(&p, &vec![0.0; g.exterior_nodes().len()]).unwrap();
        assert!(sol.u.values().iter().all(|&v| v == 0.0));
        assert_eq!(sol.norm_ratio, 0.0);
    }

    #[test]
    fn constants_are_reproduced_without_potentials() {
        let g = grid();
        let sol = solve_dirichlet(&Potentials::zero(g.clone()), &vec![2.5; g.exterior_nodes().len()])
            .unwrap();
        assert!(sol.u.values().iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn solution_matches_data_and_equations() {
        let g = grid();
        let p = presets::random_admissible(&g, 2, &RandomSpec::default());
        let f = presets::random_scalar(&g, 3, 1.0);
        let fe: Vec<f64> = g.exterior_nodes().iter().map(|&e| f.values()[e]).collect();
        let sol = solve_dirichlet(&p, &fe).unwrap();
        for (b, &e) in g.exterior_nodes().iter().enumerate() {
            assert_eq!(sol.u.values()[e], fe[b]);
        }
        assert!(sol.residual < 1e-12, "{}", sol.residual);
        assert!(sol.condition >= 1.0);
    }

    #[test]
    fn dn_routes_agree_and_are_symmetric() {
        for g in [grid(), build_grid(&GridConfig::square_with_disk(0.4, -1.0, 1.0, 7, 0.5)).unwrap()] {
            let p = presets::random_admissible(&g, 4, &RandomSpec::default());
            let prob = DirichletProblem::new(&p).unwrap();
            let (a, b) = (prob.dn_schur(), prob.dn_columns());
            assert!(a.symmetry_defect() < 1e-12);
            assert!(a.relative_distance(&b) < 1e-10);
            assert_eq!(a.potentials_hash, p.fingerprint());
        }
    }

    #[test]
    fn bilinear_form_only_sees_exterior_values_of_test_function() {
        let g = grid();
        let p = presets::random_admissible(&g, 5, &RandomSpec::default());
        let prob = DirichletProblem::new(&p).unwrap();
        let fe: Vec<f64> = (0..g.exterior_nodes().len()).map(|k| (k as f64).sin()).collect();
        let u = prob.solve(&fe).unwrap().u;
        let w1 = presets::random_scalar(&g, 6, 1.0);
        let mut w2 = presets::random_scalar(&g, 7, 1.0).into_values();
        for &e in g.exterior_nodes() {
            w2[e] = w1.values()[e];
        }
        let (b1, b2) = (prob.bilinear(u.values(), w1.values()), prob.bilinear(u.values(), &w2));
        assert!((b1 - b2).abs() < 1e-11 * b1.abs().max(1.0));
        // and equals the DN pairing
        let ge: Vec<f64> = g.exterior_nodes().iter().map(|&e| w1.values()[e]).collect();
        let dn = prob.dn_schur();
        assert!((dn.pairing(&fe, &ge) - b1).abs() < 1e-10 * b1.abs().max(1.0));
    }

    #[test]
    fn singular_interior_block_is_reported() {
        let g = grid();
        let m = g.node_count();
        let mut k = DMatrix::<f64>::identity(m, m);
        for &i in g.interior_nodes() {
            k[(i, i)] = 0.0;
        }
        let op = OperatorMatrix::new(g.clone(), crate::operators::AssemblyKind::Expansion, k);
        assert!(matches!(
            DirichletProblem::from_operator(&op, String::new()),
            Err(Error::WellPosedness { .. })
        ));
    }

    #[test]
    fn exterior_csv_round_trip() {
        let g = grid();
        let f: Vec<f64> = (0..g.exterior_nodes().len()).map(|k| k as f64 * 0.25).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_exterior_csv(&g, &f, &path).unwrap();
        assert_eq!(read_exterior_csv(&g, &path).unwrap(), f);
    }
}
