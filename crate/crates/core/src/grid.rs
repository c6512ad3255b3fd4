//! Truncated lattice model of `ℝⁿ`.
//!
//! The box `B` is sampled with `N` nodes per axis in lexicographic order (first
//! axis slowest). Nodes strictly inside the open set `Ω` are *interior*; every
//! other node, including nodes lying exactly on `∂Ω`, is *exterior*. Integrals
//! over `ℝⁿ` become `hⁿ Σ_i` over all box nodes and integrals over `ℝ²ⁿ`
//! become `h²ⁿ Σ_{i,j}`.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::BivariateVectorField;
use crate::operators::AlphaKernel;

/// Relative slack used when classifying nodes against `∂Ω`.
const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub s: f64,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub nodes_per_axis: usize,
    pub omega: OmegaSpec,
}

/// Description of the open set `Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum OmegaSpec {
    /// Open axis-aligned box `Π (min_d, max_d)`.
    Box(Vec<[f64; 2]>),
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
}

impl OmegaSpec {
    fn contains(&self, x: &[f64], h: f64) -> bool {
        let eps = BOUNDARY_SLACK * h;
        match self {
            OmegaSpec::Box(b) => x
                .iter()
                .zip(b)
                .all(|(&xi, &[lo, hi])| xi > lo + eps && xi < hi - eps),
            OmegaSpec::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                r2.sqrt() < radius - eps
            }
        }
    }
}

impl GridConfig {
    /// One-dimensional box `[lo, hi]` with `Ω = (omega_lo, omega_hi)`.
    pub fn interval(s: f64, lo: f64, hi: f64, nodes: usize, omega_lo: f64, omega_hi: f64) -> Self {
        GridConfig {
            n: 1,
            s,
            bounds: vec![[lo, hi]],
            nodes_per_axis: nodes,
            omega: OmegaSpec::Box(vec![[omega_lo, omega_hi]]),
        }
    }

    /// Square `[lo, hi]²` with `Ω` the open disk of `radius` at the origin.
    pub fn square_with_disk(s: f64, lo: f64, hi: f64, nodes: usize, radius: f64) -> Self {
        GridConfig {
            n: 2,
            s,
            bounds: vec![[lo, hi], [lo, hi]],
            nodes_per_axis: nodes,
            omega: OmegaSpec::Ball {
                center: vec![0.0, 0.0],
                radius,
            },
        }
    }
}

#[derive(Debug)]
pub struct Grid {
    config: GridConfig,
    h: f64,
    coords: Vec<f64>,
    omega_mask: Vec<bool>,
    interior: Vec<usize>,
    exterior: Vec<usize>,
    alpha: OnceLock<AlphaKernel>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
    }
}

/// Builds the lattice described by `config`.
pub fn build_grid(config: &GridConfig) -> Result<Arc<Grid>> {
    Grid::new(config.clone()).map(Arc::new)
}

impl Grid {
    pub fn new(config: GridConfig) -> Result<Self> {
        let n = config.n;
        if n != 1 && n != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {n}")));
        }
        let s = config.s;
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidGrid(format!("order s must lie in (0,1), got {s}")));
        }
        if config.bounds.len() != n {
            return Err(Error::InvalidGrid(format!(
                "box has {} axes, expected {n}",
                config.bounds.len()
            )));
        }
        let npa = config.nodes_per_axis;
        if npa < 3 {
            return Err(Error::InvalidGrid(format!(
                "{npa} nodes per axis leave no room for an exterior collar"
            )));
        }
        match &config.omega {
            OmegaSpec::Box(b) if b.len() != n => {
                return Err(Error::InvalidGrid("omega box dimension mismatch".into()))
            }
            OmegaSpec::Ball { center, radius } => {
                if center.len() != n {
                    return Err(Error::InvalidGrid("omega ball center dimension mismatch".into()));
                }
                if !(*radius > 0.0) {
                    return Err(Error::InvalidGrid("omega ball radius must be positive".into()));
                }
            }
            _ => {}
        }

        let spacings: Vec<f64> = config
            .bounds
            .iter()
            .map(|&[lo, hi]| (hi - lo) / (npa - 1) as f64)
            .collect();
        let h = spacings[0];
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid("box must have max > min".into()));
        }
        if spacings.iter().any(|&hd| ((hd - h) / h).abs() > 1e-12) {
            return Err(Error::InvalidGrid(
                "all axes must share the same spacing (uniform quadrature weight)".into(),
            ));
        }

        let count = npa.pow(n as u32);
        let mut coords = Vec::with_capacity(count * n);
        let mut omega_mask = Vec::with_capacity(count);
        let mut interior = Vec::new();
        let mut exterior = Vec::new();
        let mut idx = vec![0usize; n];
        for node in 0..count {
            let mut rem = node;
            for d in (0..n).rev() {
                idx[d] = rem % npa;
                rem /= npa;
            }
            let x: Vec<f64> = (0..n)
                .map(|d| config.bounds[d][0] + idx[d] as f64 * h)
                .collect();
            let inside = config.omega.contains(&x, h);
            if inside && idx.iter().any(|&k| k == 0 || k == npa - 1) {
                return Err(Error::InvalidGrid(
                    "omega touches the box boundary: an exterior collar of at least one node is required"
                        .into(),
                ));
            }
            coords.extend_from_slice(&x);
            omega_mask.push(inside);
            if inside {
                interior.push(node);
            } else {
                exterior.push(node);
            }
        }
        if interior.is_empty() {
            return Err(Error::InvalidGrid("omega contains no grid node".into()));
        }
        if exterior.is_empty() {
            return Err(Error::InvalidGrid("exterior contains no grid node".into()));
        }

        Ok(Grid {
            config,
            h,
            coords,
            omega_mask,
            interior,
            exterior,
            alpha: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn s(&self) -> f64 {
        self.config.s
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.config.nodes_per_axis
    }

    /// Quadrature weight `hⁿ`.
    pub fn weight(&self) -> f64 {
        self.h.powi(self.n() as i32)
    }

    pub fn node_count(&self) -> usize {
        self.omega_mask.len()
    }

    pub fn coord(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.coords[i * n..(i + 1) * n]
    }

    pub fn is_interior(&self, i: usize) -> bool {
        self.omega_mask[i]
    }

    pub fn omega_mask(&self) -> &[bool] {
        &self.omega_mask
    }

    /// Interior nodes in increasing index order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Exterior nodes in increasing index order.
    pub fn exterior_nodes(&self) -> &[usize] {
        &self.exterior
    }

    /// Per-axis lattice indices of node `i`.
    pub fn lattice_index(&self, i: usize) -> Vec<usize> {
        let npa = self.nodes_per_axis();
        let mut idx = vec![0; self.n()];
        let mut rem = i;
        for d in (0..self.n()).rev() {
            idx[d] = rem % npa;
            rem /= npa;
        }
        idx
    }

    /// `x_j − x_i` written into `out`; returns `|x_j − x_i|`.
    pub fn displacement(&self, i: usize, j: usize, out: &mut [f64]) -> f64 {
        let (xi, xj) = (self.coord(i), self.coord(j));
        let mut r2 = 0.0;
        for d in 0..self.n() {
            out[d] = xj[d] - xi[d];
            r2 += out[d] * out[d];
        }
        r2.sqrt()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (xi, xj) = (self.coord(i), self.coord(j));
        xi.iter()
            .zip(xj)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Whether both nodes of the pair lie in `Ω`.
    pub fn in_omega_squared(&self, i: usize, j: usize) -> bool {
        self.omega_mask[i] && self.omega_mask[j]
    }

    /// The pairwise weight α (computed once per grid).
    pub fn alpha(&self) -> &AlphaKernel {
        self.alpha.get_or_init(|| AlphaKernel::new(self))
    }

    /// Stable hash of the configuration, used to tag reports and artifacts.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&self.config).expect("grid config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

/// Real-valued function sampled at every box node.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::ShapeMismatch {
                expected: grid.node_count(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = vec![c; grid.node_count()];
        ScalarField { grid, values }
    }

    /// Samples `f` at every node coordinate.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.node_count()).map(|i| f(grid.coord(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// CSV with columns `node_index, coord_1..coord_n, value`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let n = self.grid.n();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["node_index".to_string()];
        header.extend((1..=n).map(|d| format!("coord_{d}")));
        header.push("value".into());
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(self.grid.coord(i).iter().map(|c| format!("{c:e}")));
            rec.push(format!("{v:e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`ScalarField::write_csv`]; coordinates are ignored.
    pub fn read_csv(grid: Arc<Grid>, path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut values = vec![f64::NAN; grid.node_count()];
        for rec in r.records() {
            let rec = rec?;
            let idx: usize = parse_field(&rec, 0)?;
            let v: f64 = parse_field(&rec, rec.len() - 1)?;
            *values
                .get_mut(idx)
                .ok_or_else(|| Error::Format(format!("node index {idx} out of range")))? = v;
        }
        Self::new(grid, values)
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize) -> Result<T> {
    rec.get(k)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("cannot parse column {k} of record {rec:?}")))
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// `⟨u, v⟩ = hⁿ Σ_i u_i v_i`.
pub fn inner_product(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    same_grid(&u.grid, &v.grid)?;
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok(u.grid.weight() * dot)
}

/// `⟨V, W⟩ = h²ⁿ Σ_{i,j} V(i,j)·W(i,j)`, diagonal included.
pub fn pair_inner_product(v: &BivariateVectorField, w: &BivariateVectorField) -> Result<f64> {
    same_grid(v.grid(), w.grid())?;
    let dot: f64 = v.raw().iter().zip(w.raw()).map(|(a, b)| a * b).sum();
    Ok(v.grid().weight().powi(2) * dot)
}
