use std::path::Path;
use std::sync::Arc;

use fmse_core::fields::{
    assemble_q, check_potentials, decompose, sigma_from_a, Part, Potentials, SigmaKernel,
};
use fmse_core::gauge::{approx_gauge_residual, gauge_partner, is_sim_equivalent};
use fmse_core::grid::{inner_product, pair_inner_product, Grid, ScalarField};
use fmse_core::inverse::recover;
use fmse_core::operators::{
    assemble_bilinear, assemble_expansion, assemble_sigma_form, fourier_symbol_check,
    frac_divergence, frac_gradient, reduction_residual, reduction_terms,
};
use fmse_core::presets;
use fmse_core::solver::{read_exterior_csv, write_exterior_csv, DirichletProblem, DnMatrix};
use fmse_core::walk::{bump_sigma, neumaier_sum, omega_bump, Walk, WalkConfig};
use fmse_core::{io, Error};

use crate::config::{ExperimentConfig, PotentialsSource, WalkSigma};
use crate::report::Report;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Core(Error::WellPosedness { .. }) => 3,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// Relative DN difference treated as "measured equals reference".
const SAME_DATA: f64 = 1e-12;

pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub grid: Arc<Grid>,
    pub out: &'a Path,
}

impl Ctx<'_> {
    fn path(&self, name: &str, report: &mut Report) -> std::path::PathBuf {
        report.artifact(name);
        self.out.join(name)
    }
}

pub fn load_potentials(src: &PotentialsSource, grid: &Arc<Grid>, seed: u64) -> Result<Potentials> {
    let need_2d = |what: &str| {
        if grid.n() == 2 {
            Ok(())
        } else {
            Err(RunError::Config(format!("preset {what} needs a two-dimensional grid")))
        }
    };
    Ok(match src {
        PotentialsSource::Zero => Potentials::zero(grid.clone()),
        PotentialsSource::Random { seed: s, spec } => {
            presets::random_admissible(grid, s.unwrap_or(seed), spec)
        }
        PotentialsSource::ParallelOnly2d { seed: s, spec } => {
            need_2d("parallel-only-2d")?;
            let p = presets::random_admissible(grid, s.unwrap_or(seed), spec);
            Potentials::new(p.a.part(Part::Parallel), p.q)?
        }
        PotentialsSource::Perpendicular2d { seed: s, spec } => {
            need_2d("perpendicular-2d")?;
            if !(spec.perpendicular_scale != 0.0) {
                return Err(RunError::Config(
                    "preset perpendicular-2d needs a nonzero perpendicular_scale".into(),
                ));
            }
            presets::random_admissible(grid, s.unwrap_or(seed), spec)
        }
        PotentialsSource::Files { a, q } => {
            let field = if a.extension().is_some_and(|e| e == "bin") {
                io::read_field_binary(grid.clone(), a)?
            } else {
                io::read_field_csv(grid.clone(), a)?
            };
            let q = match q {
                Some(path) => io::read_scalar_csv(grid.clone(), path)?,
                None => ScalarField::zeros(grid.clone()),
            };
            Potentials::new(field, q)?
        }
    })
}

fn potentials(ctx: &Ctx) -> Result<Potentials> {
    load_potentials(&ctx.cfg.potentials, &ctx.grid, ctx.cfg.seed)
}

pub fn check_ops(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let (cfg, g) = (ctx.cfg, &ctx.grid);
    let tol = &cfg.tolerances;
    let p = potentials(ctx)?;

    let mut adj = 0.0f64;
    for k in 0..cfg.check_ops.samples as u64 {
        let u = presets::random_scalar(g, cfg.seed.wrapping_add(k), 1.0);
        let v = presets::random_field(g, cfg.seed.wrapping_add(1_000_003 + k), 1.0, false);
        let lhs = inner_product(&frac_divergence(&v), &u)?;
        let rhs = pair_inner_product(&v, &frac_gradient(&u))?;
        adj = adj.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
    }
    report.at_most("adjointness", adj, tol.adjointness);

    let a = &p.a;
    let norm2 = pair_inner_product(a, a)?;
    let mut completeness = 0.0f64;
    let mut pythagoras = 0.0f64;
    if norm2 > 0.0 {
        for (x, y) in [(Part::Symmetric, Part::Antisymmetric), (Part::Parallel, Part::Perpendicular)] {
            let (px, py) = (decompose(a, x), decompose(a, y));
            completeness = completeness.max(px.add(&py)?.max_abs_diff(a)? / a.max_abs());
            let split = pair_inner_product(&px, &px)? + pair_inner_product(&py, &py)?;
            pythagoras = pythagoras.max((split - norm2).abs() / norm2);
        }
    }
    report.metric("decomposition_completeness", completeness);
    report.metric("pythagoras", pythagoras);
    report.at_most("decomposition", completeness.max(pythagoras), tol.decomposition);

    let kb = assemble_bilinear(&p);
    let ke = assemble_expansion(&p);
    let be = kb.relative_distance(&ke);
    report.metric("bilinear_vs_expansion", be);
    let mut worst = be;
    match sigma_from_a(&p.a) {
        Ok(sigma) => {
            let ks = assemble_sigma_form(&sigma, &assemble_q(&p))?;
            let bs = kb.relative_distance(&ks);
            report.metric("bilinear_vs_sigma_form", bs);
            worst = worst.max(bs);
        }
        Err(e) => report.metric("sigma_form_skipped", e.to_string()),
    }
    report.at_most("assembly_agreement", worst, tol.assembly);
    report.metric("operator_symmetry_defect", kb.symmetry_defect());
    report.metric("potentials", check_potentials(&p));
    report.metric("potentials_hash", p.fingerprint());

    kb.write_binary(ctx.path("operator.bin", report))?;
    kb.write_csv(ctx.path("operator.csv", report))?;
    Ok(())
}

pub fn solve(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let (cfg, g) = (ctx.cfg, &ctx.grid);
    let p = potentials(ctx)?;
    let f = match &cfg.solve.exterior {
        Some(path) => read_exterior_csv(g, path)?,
        None => {
            let u = presets::random_scalar(g, cfg.seed, 1.0);
            g.exterior_nodes().iter().map(|&e| u.values()[e]).collect()
        }
    };
    let sol = DirichletProblem::new(&p)?.solve(&f)?;
    report.at_most("solve_residual", sol.residual, cfg.tolerances.solve_residual);
    report.metric("condition", sol.condition);
    report.metric("norm_ratio", sol.norm_ratio);
    report.metric("potentials_hash", p.fingerprint());
    io::write_scalar_csv(&sol.u, ctx.path("solution.csv", report))?;
    write_exterior_csv(g, &f, ctx.path("exterior.csv", report))?;
    Ok(())
}

fn write_dn(ctx: &Ctx, dn: &DnMatrix, stem: &str, report: &mut Report) -> Result<()> {
    dn.write_binary(ctx.path(&format!("{stem}.bin"), report))?;
    dn.write_csv(ctx.path(&format!("{stem}.csv"), report))?;
    dn.write_legend(ctx.path(&format!("{stem}_legend.csv"), report))?;
    Ok(())
}

pub fn dn(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let tol = &ctx.cfg.tolerances;
    let p = potentials(ctx)?;
    let prob = DirichletProblem::new(&p)?;
    let schur = prob.dn_schur();
    let columns = prob.dn_columns();
    report.at_most("dn_symmetry", schur.symmetry_defect(), tol.dn_symmetry);
    report.at_most("dn_routes", schur.relative_distance(&columns), tol.dn_routes);
    report.metric("condition", prob.condition());
    report.metric("dn", schur.summary());
    write_dn(ctx, &schur, "dn", report)
}

pub fn gauge(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let (cfg, g) = (ctx.cfg, &ctx.grid);
    let tol = &cfg.tolerances;
    let p = potentials(ctx)?;
    let pp = gauge_partner(&p).map_err(|e| RunError::Config(e.to_string()))?;
    let sim = is_sim_equivalent(&p, &pp)?;
    report.holds("sim_verdict", sim.verdict && sim.consistent);
    report.metric("sim", &sim);
    report.metric("partner_change", pp.a.max_abs_diff(&p.a)?);

    let (l1, l2) = (DirichletProblem::new(&p)?.dn_schur(), DirichletProblem::new(&pp)?.dn_schur());
    report.at_most("dn_distance", l1.relative_distance(&l2), tol.gauge);

    let base = approx_gauge_residual(&p, &pp, &ScalarField::constant(g.clone(), 1.0))?;
    let mut ratios = Vec::new();
    for k in 0..cfg.gauge.phi_samples as u64 {
        let phi = presets::random_gauge_function(g, cfg.seed.wrapping_add(k), cfg.gauge.phi_amplitude);
        let r = approx_gauge_residual(&p, &pp, &phi)?;
        ratios.push(r / base.max(f64::MIN_POSITIVE));
    }
    report.metric("conjugation_base_residual", base);
    if !ratios.is_empty() {
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        report.at_least("conjugation_ratio", min, tol.conjugation_ratio);
    }

    io::write_field_binary(&pp.a, ctx.path("partner_a.bin", report))?;
    io::write_scalar_csv(&pp.q, ctx.path("partner_q.csv", report))?;
    write_dn(ctx, &l1, "dn", report)?;
    write_dn(ctx, &l2, "dn_partner", report)
}

pub fn invert(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let (cfg, g) = (ctx.cfg, &ctx.grid);
    let tol = &cfg.tolerances;
    let opts = &cfg.invert;
    let truth = potentials(ctx)?;
    let reference = load_potentials(&opts.reference, g, cfg.seed)?;
    let (measured, known_truth) = match &opts.measured_dn {
        Some(path) => {
            let m = io::read_matrix_binary(path)?;
            (DnMatrix::from_matrix(g.clone(), m, path.display().to_string())?, None)
        }
        None => (DirichletProblem::new(&truth)?.dn_schur(), Some(&truth)),
    };
    let res = recover(&measured, &reference, &truth, known_truth, &opts.recovery)?;
    if res.data_difference <= SAME_DATA {
        // Data equal to the reference up to round-off: the class must not move.
        report.at_most("recovery_change", res.max_abs_change(), tol.recovery_change);
    } else {
        report.at_most("recovery_fit", res.data_fit_residual, tol.recovery_fit);
    }
    if let Some(err) = res.parameter_error {
        if res.ill_conditioned {
            report.metric("parameter_error_unchecked", "ill-conditioned system");
        } else {
            report.at_most("recovery_parameter", err, tol.recovery_parameter);
        }
    }
    for (name, v) in [
        ("data_fit_residual", res.data_fit_residual),
        ("data_difference", res.data_difference),
        ("condition", res.condition),
        ("max_abs_change", res.max_abs_change()),
    ] {
        report.metric(name, v);
    }
    report.metric("parameter_error", res.parameter_error);
    report.metric("rank", res.rank);
    report.metric("unknowns", res.unknowns);
    report.metric("equations", res.equations);
    report.metric("ill_conditioned", res.ill_conditioned);

    let mut w = csv::Writer::from_path(ctx.path("sigma.csv", report)).map_err(Error::from)?;
    w.write_record(["i", "j", "sigma", "d_sigma"]).map_err(Error::from)?;
    for ((&(i, j), s), d) in res.pairs.iter().zip(&res.sigma).zip(&res.d_sigma) {
        w.write_record([i.to_string(), j.to_string(), format!("{s:e}"), format!("{d:e}")])
            .map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    io::write_scalar_csv(&res.q_field()?, ctx.path("q.csv", report))?;
    if let Ok(kernel) = res.sigma_kernel() {
        io::write_matrix_binary(&kernel.to_matrix(), ctx.path("sigma.bin", report))?;
    }
    let json = serde_json::to_string_pretty(&res).expect("result serializes");
    std::fs::write(ctx.path("recovery.json", report), json + "\n").map_err(Error::from)?;
    Ok(())
}

pub fn walk(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let (cfg, g) = (ctx.cfg, &ctx.grid);
    let tol = &cfg.tolerances;
    let opts = &cfg.walk;
    let sigma = match &opts.sigma {
        WalkSigma::Ones => SigmaKernel::ones(g.clone()),
        WalkSigma::Bump { amplitude } => bump_sigma(g, *amplitude)?,
        WalkSigma::Potentials => sigma_from_a(&potentials(ctx)?.a)?,
    };
    let walk = Walk::new(
        WalkConfig::new(sigma, opts.max_jump, cfg.seed).map_err(|e| RunError::Config(e.to_string()))?,
    );
    let m = g.node_count();
    let sum_err = (0..m)
        .map(|x| (neumaier_sum(walk.row(x).iter().copied()) - 1.0).abs())
        .fold(0.0, f64::max);
    report.at_most("walk_row_sum", sum_err, tol.walk_sum);

    let u = presets::random_scalar(g, cfg.seed, 1.0);
    let gen = walk.generator_residual(&u)?;
    report.at_most("generator", gen.residual, tol.generator);

    let node = opts.node.unwrap_or_else(|| g.interior_nodes().first().copied().unwrap_or(0));
    if node >= m {
        return Err(RunError::Config(format!("walk.node {node} is out of range")));
    }
    let sample = walk.sample_jumps(node, opts.count);
    report.at_most("chi_square", sample.chi_square, sample.quantile_999);
    report.metric("dof", sample.dof);
    let z = walk.normalizers();
    report.metric("normalizer_min", z.iter().copied().fold(f64::INFINITY, f64::min));
    report.metric("normalizer_max", z.iter().copied().fold(0.0, f64::max));
    report.metric("tail_bound", walk.tail_bound(node));
    report.metric("tau", walk.config().tau);

    let u0 = ScalarField::from_fn(g.clone(), |x| omega_bump(g, x))?;
    let states = walk.evolve(&u0, opts.steps)?;
    let mut w = csv::Writer::from_path(ctx.path("walk_u.csv", report)).map_err(Error::from)?;
    w.write_record(["step", "node_index", "value"]).map_err(Error::from)?;
    for (t, s) in states.iter().enumerate() {
        for (i, v) in s.values().iter().enumerate() {
            w.write_record([t.to_string(), i.to_string(), format!("{v:e}")]).map_err(Error::from)?;
        }
    }
    w.flush().map_err(Error::from)?;

    let probs = walk.jump_probabilities(node);
    let mut w = csv::Writer::from_path(ctx.path("jumps.csv", report)).map_err(Error::from)?;
    w.write_record(["source", "count", "expected"]).map_err(Error::from)?;
    for ((s, c), p) in sample.sources.iter().zip(&sample.counts).zip(&probs.probabilities) {
        w.write_record([s.to_string(), c.to_string(), format!("{:e}", p * opts.count as f64)])
            .map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

pub fn reduce(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let (cfg, g) = (ctx.cfg, &ctx.grid);
    let p = potentials(ctx)?;
    let gamma = match &cfg.reduce.gamma {
        Some(path) => io::read_scalar_csv(g.clone(), path)?,
        None => presets::random_conductivity(g, cfg.seed, cfg.reduce.amplitude),
    };
    let terms = reduction_terms(&gamma, &p).map_err(|e| match e {
        Error::InvalidConductivity(m) => RunError::Config(m),
        e => e.into(),
    })?;
    report.at_most("reduction", reduction_residual(&gamma, &p)?, cfg.tolerances.reduction);
    let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    report.metric("max_abs_q_prime", max(&terms.q_prime));
    report.metric("max_abs_q_prime_minus_q", {
        let d: Vec<f64> = terms.q_prime.iter().zip(p.q.values()).map(|(a, b)| a - b).collect();
        max(&d)
    });
    io::write_scalar_csv(&gamma, ctx.path("gamma.csv", report))?;
    io::write_scalar_csv(&ScalarField::new(g.clone(), terms.q_prime)?, ctx.path("q_prime.csv", report))?;
    Ok(())
}

pub fn fourier(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let rep = fourier_symbol_check(&ctx.grid).map_err(|e| RunError::Config(e.to_string()))?;
    report.at_most("fourier_residual", rep.residual, ctx.cfg.tolerances.fourier);
    report.metric("fit", &rep);
    Ok(())
}
