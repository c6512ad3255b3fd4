//! Weighted long-jump random walk on the lattice `hℤⁿ` truncated to the box.
//!
//! The jump law at a destination node `x` is
//! `P(x,k) = σ(x, x+hk)|k|^{−n−2s} / Z(x)` over in-box targets `x+hk ≠ x`, and
//! the master equation is `u(x, t+τ) = Σ_k P(x,k) u(x+hk, t)` with `τ = h^{2s}`.
//! Since `Z` is attached to the destination, the evolution is not a
//! row-stochastic forward chain for nonconstant σ.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::fields::SigmaKernel;
use crate::grid::{build_grid, Grid, GridConfig, OmegaSpec, ScalarField};
use crate::special::lattice_zeta;

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone)]
pub struct WalkConfig {
    pub sigma: SigmaKernel,
    /// `τ = h^{2s}`
    pub tau: f64,
    /// Jumps with lattice length above this are dropped; `None` keeps every in-box jump.
    pub max_jump: Option<f64>,
    pub seed: u64,
}

impl WalkConfig {
    pub fn new(sigma: SigmaKernel, max_jump: Option<f64>, seed: u64) -> Result<Self> {
        if let Some(k) = max_jump {
            if !(k >= 1.0) {
                return Err(Error::InvalidArgument(format!("jump cutoff {k} is below 1")));
            }
        }
        let g = sigma.grid();
        let tau = g.h().powf(2.0 * g.s());
        Ok(WalkConfig { sigma, tau, max_jump, seed })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.sigma.grid()
    }
}

/// Jump law at one destination node.
#[derive(Debug, Clone, Serialize)]
pub struct JumpDistribution {
    pub node: usize,
    /// Source nodes `x + hk`, ascending.
    pub sources: Vec<usize>,
    /// Lattice offsets `k` matching `sources`.
    pub offsets: Vec<Vec<i64>>,
    pub probabilities: Vec<f64>,
    /// `Z(x)`
    pub normalizer: f64,
    /// Upper bound on the weight `Σ |k|^{−n−2s}` lost to truncation at `x`.
    pub tail_bound: f64,
}

/// Precomputed transition weights for every node.
#[derive(Debug, Clone)]
pub struct Walk {
    cfg: WalkConfig,
    /// Row `i` holds `P(i, ·)` indexed by source node; zero on the diagonal.
    probs: Vec<f64>,
    z: Vec<f64>,
}

fn lattice_offset(grid: &Grid, i: usize, j: usize) -> Vec<i64> {
    let (a, b) = (grid.lattice_index(i), grid.lattice_index(j));
    a.iter().zip(&b).map(|(x, y)| *y as i64 - *x as i64).collect()
}

impl Walk {
    pub fn new(cfg: WalkConfig) -> Self {
        let grid = cfg.grid().clone();
        let (m, n, s, h) = (grid.node_count(), grid.n(), grid.s(), grid.h());
        let expo = n as f64 + 2.0 * s;
        let cutoff = cfg.max_jump.unwrap_or(f64::INFINITY);
        let rows: Vec<(Vec<f64>, f64)> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut w = vec![0.0; m];
                for (j, wj) in w.iter_mut().enumerate() {
                    if j == i {
                        continue;
                    }
                    let k = grid.distance(i, j) / h;
                    if k <= cutoff + 1e-9 {
                        *wj = cfg.sigma.get(i, j) * k.powf(-expo);
                    }
                }
                let z = neumaier_sum(w.iter().copied());
                for v in w.iter_mut() {
                    *v /= z;
                }
                (w, z)
            })
            .collect();
        let mut probs = Vec::with_capacity(m * m);
        let mut z = Vec::with_capacity(m);
        for (row, zi) in rows {
            probs.extend(row);
            z.push(zi);
        }
        Walk { cfg, probs, z }
    }

    pub fn config(&self) -> &WalkConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.cfg.grid()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.grid().node_count();
        &self.probs[i * m..(i + 1) * m]
    }

    pub fn normalizer(&self, i: usize) -> f64 {
        self.z[i]
    }

    pub fn normalizers(&self) -> &[f64] {
        &self.z
    }

    /// Bound on `Σ_{k missing} |k|^{−n−2s}` at node `i`: jumps leaving the
    /// box or exceeding the cutoff. For n = 1 each side contributes at most
    /// `K^{−2s}/(2s)`; for n = 2 the shells `|k|_∞ = r > K` hold `8r` points,
    /// giving `4K^{−2s}/s`.
    pub fn tail_bound(&self, i: usize) -> f64 {
        let grid = self.grid();
        let (n, s) = (grid.n(), grid.s());
        let last = grid.nodes_per_axis() - 1;
        let cut = self.cfg.max_jump.map_or(f64::INFINITY, f64::floor);
        let reach: Vec<f64> = grid
            .lattice_index(i)
            .iter()
            .flat_map(|&a| [a as f64, (last - a) as f64])
            .map(|r| r.min(cut))
            .collect();
        let side = |k: f64| if k <= 0.0 { f64::INFINITY } else { k.powf(-2.0 * s) / (2.0 * s) };
        match n {
            1 => side(reach[0]) + side(reach[1]),
            _ => {
                let k = reach.iter().copied().fold(f64::INFINITY, f64::min);
                if k <= 0.0 {
                    f64::INFINITY
                } else {
                    4.0 * k.powf(-2.0 * s) / s
                }
            }
        }
    }

    pub fn jump_probabilities(&self, x: usize) -> JumpDistribution {
        let grid = self.grid();
        let row = self.row(x);
        let sources: Vec<usize> = (0..row.len()).filter(|&j| row[j] > 0.0).collect();
        JumpDistribution {
            node: x,
            offsets: sources.iter().map(|&j| lattice_offset(grid, x, j)).collect(),
            probabilities: sources.iter().map(|&j| row[j]).collect(),
            sources,
            normalizer: self.z[x],
            tail_bound: self.tail_bound(x),
        }
    }

    /// `u(x, t+τ) = Σ_k P(x,k) u(x+hk, t)`.
    pub fn master_step(&self, u: &ScalarField) -> Result<ScalarField> {
        crate::grid::same_grid(u.grid(), self.grid())?;
        let uv = u.values();
        let m = uv.len();
        let out: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| neumaier_sum(self.row(i).iter().zip(uv).map(|(p, v)| p * v)))
            .collect();
        ScalarField::new(self.grid().clone(), out)
    }

    /// States after `0, 1, …, steps` applications of [`Walk::master_step`].
    pub fn evolve(&self, u0: &ScalarField, steps: usize) -> Result<Vec<ScalarField>> {
        let mut out = vec![u0.clone()];
        for _ in 0..steps {
            let next = self.master_step(out.last().unwrap())?;
            out.push(next);
        }
        Ok(out)
    }

    /// Compares `Z(x)(master_step(u) − u)(x)/τ` with
    /// `hⁿ Σ_j σ(x_i,x_j)(u_j − u_i)/|x_i − x_j|^{n+2s}`.
    pub fn generator_residual(&self, u: &ScalarField) -> Result<GeneratorReport> {
        let grid = self.grid().clone();
        let stepped = self.master_step(u)?;
        let (m, n, s, w) = (grid.node_count(), grid.n(), grid.s(), grid.weight());
        let expo = n as f64 + 2.0 * s;
        let uv = u.values();
        let (mut abs, mut scale) = (0.0f64, 0.0f64);
        for i in 0..m {
            let lhs = self.z[i] * (stepped.values()[i] - uv[i]) / self.cfg.tau;
            let row = self.row(i);
            let (mut rhs, mut mag) = (Vec::new(), 0.0);
            for j in 0..m {
                if row[j] == 0.0 {
                    continue;
                }
                let kern = w * self.cfg.sigma.get(i, j) / grid.distance(i, j).powf(expo);
                rhs.push(kern * (uv[j] - uv[i]));
                mag += kern * (uv[j].abs() + uv[i].abs());
            }
            abs = abs.max((lhs - neumaier_sum(rhs)).abs());
            scale = scale.max(mag);
        }
        Ok(GeneratorReport {
            absolute: abs,
            scale,
            residual: if scale > 0.0 { abs / scale } else { abs },
        })
    }

    /// Draws `count` sources for destination `x` by inverse CDF. The stream
    /// is keyed by `(seed, x)` so nodes can be sampled independently.
    pub fn sample_jumps(&self, x: usize, count: usize) -> JumpSample {
        let dist = self.jump_probabilities(x);
        let mut cdf = Vec::with_capacity(dist.probabilities.len());
        let mut acc = 0.0;
        for p in &dist.probabilities {
            acc += p;
            cdf.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(x as u64);
        let mut counts = vec![0u64; cdf.len()];
        let last = cdf.len() - 1;
        for _ in 0..count {
            let r: f64 = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= r).min(last);
            counts[k] += 1;
        }
        let (chi_square, dof) = chi_square(&counts, &dist.probabilities, count as f64);
        let quantile_999 = ChiSquared::new(dof.max(1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.999);
        JumpSample {
            node: x,
            count,
            sources: dist.sources,
            counts,
            chi_square,
            dof,
            quantile_999,
            pass: chi_square < quantile_999,
        }
    }
}

/// Pearson statistic after pooling consecutive bins until each expects ≥ 5.
fn chi_square(counts: &[u64], probs: &[f64], total: f64) -> (f64, usize) {
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        o += c as f64;
        e += p * total;
        if e >= 5.0 {
            bins.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match bins.last_mut() {
            Some(b) => {
                b.0 += o;
                b.1 += e;
            }
            None => bins.push((o, e)),
        }
    }
    let stat = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    (stat, bins.len().saturating_sub(1))
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorReport {
    pub absolute: f64,
    pub scale: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpSample {
    pub node: usize,
    pub count: usize,
    pub sources: Vec<usize>,
    pub counts: Vec<u64>,
    pub chi_square: f64,
    pub dof: usize,
    pub quantile_999: f64,
    pub pass: bool,
}

/// Smooth nonnegative bump supported in `Ω`, equal to 1 at its center.
pub fn omega_bump(grid: &Grid, x: &[f64]) -> f64 {
    let b = |t: f64| if t.abs() < 1.0 { (1.0 - 1.0 / (1.0 - t * t)).exp() } else { 0.0 };
    match &grid.config().omega {
        OmegaSpec::Ball { center, radius } => {
            let r: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            b(r / radius)
        }
        OmegaSpec::Box(bounds) => x
            .iter()
            .zip(bounds)
            .map(|(&v, [lo, hi])| b((2.0 * v - lo - hi) / (hi - lo)))
            .product(),
    }
}

/// σ of the continuum potential `A(x,y) = a·b(x)b(y)(y − x)`, `b` = [`omega_bump`]:
/// `σ(x,y) = 1 + (2/C)^{1/2} a b(x) b(y) |x − y|^{n/2+s+1}`.
pub fn bump_sigma(grid: &Arc<Grid>, amplitude: f64) -> Result<SigmaKernel> {
    let (m, n, s) = (grid.node_count(), grid.n(), grid.s());
    let pre = (2.0 / crate::operators::c_ns(n, s)).sqrt() * amplitude;
    let b: Vec<f64> = (0..m).map(|i| omega_bump(grid, grid.coord(i))).collect();
    let mut v = vec![1.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if i != j && b[i] * b[j] != 0.0 {
                v[i * m + j] = 1.0 + pre * b[i] * b[j] * grid.distance(i, j).powf(n as f64 / 2.0 + s + 1.0);
            }
        }
    }
    SigmaKernel::new(grid.clone(), v)
}

#[derive(Debug, Clone, Serialize)]
pub struct ZLimitRow {
    pub h: f64,
    pub nodes_per_axis: usize,
    /// `max_{x∈Ω} |Z_h(x) − Z_h^{σ≡1}(x)|` with identical truncation.
    pub deviation: f64,
    /// `max_{x∈Ω} (ζ − Z_h^{σ≡1}(x))`, the weight lost to truncation.
    pub truncation_gap: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZLimitReport {
    pub zeta: f64,
    pub rows: Vec<ZLimitRow>,
    /// Deviations strictly decrease (or all vanish).
    pub verdict: bool,
}

/// Normalizer study for `σ` from the continuum bump potential sampled at
/// each spacing of `h_list` over the box and domain of `base`.
pub fn z_limit_study(base: &GridConfig, amplitude: f64, h_list: &[f64]) -> Result<ZLimitReport> {
    if h_list.len() < 2 {
        return Err(Error::InvalidArgument("the study needs at least two spacings".into()));
    }
    let width = base.bounds[0][1] - base.bounds[0][0];
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let cells = (width / h).round();
        if !(cells >= 2.0) || ((width / cells) - h).abs() > 1e-9 * h {
            return Err(Error::InvalidArgument(format!("spacing {h} does not divide the box")));
        }
        let mut cfg = base.clone();
        cfg.nodes_per_axis = cells as usize + 1;
        let grid = build_grid(&cfg)?;
        let walk = Walk::new(WalkConfig::new(bump_sigma(&grid, amplitude)?, None, 0)?);
        let unit = Walk::new(WalkConfig::new(SigmaKernel::ones(grid.clone()), None, 0)?);
        let zeta = lattice_zeta(grid.n(), grid.s());
        let (mut dev, mut gap, mut tail) = (0.0f64, 0.0f64, 0.0f64);
        for &x in grid.interior_nodes() {
            dev = dev.max((walk.normalizer(x) - unit.normalizer(x)).abs());
            gap = gap.max(zeta - unit.normalizer(x));
            tail = tail.max(unit.tail_bound(x));
        }
        rows.push(ZLimitRow {
            h: grid.h(),
            nodes_per_axis: cfg.nodes_per_axis,
            deviation: dev,
            truncation_gap: gap,
            tail_bound: tail,
        });
    }
    let all_zero = rows.iter().all(|r| r.deviation == 0.0);
    let decreasing = rows.windows(2).all(|w| w[1].deviation < w[0].deviation);
    let zeta = lattice_zeta(base.n, base.s);
    Ok(ZLimitReport { zeta, rows, verdict: all_zero || decreasing })
}
