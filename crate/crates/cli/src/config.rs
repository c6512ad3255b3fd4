//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use fmse_core::inverse::RecoveryOptions;
use fmse_core::presets::RandomSpec;
use fmse_core::GridConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub grid: GridConfig,
    #[serde(default)]
    pub potentials: PotentialsSource,
    #[serde(default)]
    pub seed: u64,
    /// Relative paths are resolved against the current directory.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub check_ops: CheckOpsOptions,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub gauge: GaugeOptions,
    #[serde(default)]
    pub invert: InvertOptions,
    #[serde(default)]
    pub walk: WalkOptions,
    #[serde(default)]
    pub reduce: ReduceOptions,
}

/// Where `(A, q)` comes from. Seeds default to the top-level seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialsSource {
    Zero,
    Random {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        spec: RandomSpec,
    },
    /// Random admissible pair with the perpendicular part removed (n = 2).
    #[serde(rename = "parallel-only-2d")]
    ParallelOnly2d {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        spec: RandomSpec,
    },
    /// Random admissible pair with a nonzero perpendicular part (n = 2).
    #[serde(rename = "perpendicular-2d")]
    Perpendicular2d {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        spec: RandomSpec,
    },
    /// `a`: pair field as `.bin` or CSV; `q`: node CSV, zero when absent.
    Files {
        a: PathBuf,
        #[serde(default)]
        q: Option<PathBuf>,
    },
}

impl Default for PotentialsSource {
    fn default() -> Self {
        PotentialsSource::Random { seed: None, spec: RandomSpec::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub adjointness: f64,
    pub decomposition: f64,
    pub assembly: f64,
    pub solve_residual: f64,
    pub dn_symmetry: f64,
    pub dn_routes: f64,
    pub gauge: f64,
    /// Lower bound on the conjugation residual relative to `φ ≡ 1`.
    pub conjugation_ratio: f64,
    pub recovery_fit: f64,
    /// Bound on `max |Dσ|, |DQ|` when the data equal the reference.
    pub recovery_change: f64,
    pub recovery_parameter: f64,
    pub walk_sum: f64,
    pub generator: f64,
    pub reduction: f64,
    pub fourier: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            adjointness: 1e-12,
            decomposition: 1e-12,
            assembly: 1e-10,
            solve_residual: 1e-10,
            dn_symmetry: 1e-12,
            dn_routes: 1e-10,
            gauge: 1e-10,
            conjugation_ratio: 1e3,
            recovery_fit: 1e-8,
            recovery_change: 1e-8,
            recovery_parameter: 1e-3,
            walk_sum: 1e-14,
            generator: 1e-12,
            reduction: 1e-10,
            fourier: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckOpsOptions {
    /// Random `(u, V)` pairs for the adjointness check.
    pub samples: usize,
}

impl Default for CheckOpsOptions {
    fn default() -> Self {
        CheckOpsOptions { samples: 10 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Exterior data CSV (`exterior_node_index, value`); random data when absent.
    pub exterior: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaugeOptions {
    /// Random gauge functions tried against the partner pair.
    pub phi_samples: usize,
    pub phi_amplitude: f64,
}

impl Default for GaugeOptions {
    fn default() -> Self {
        GaugeOptions { phi_samples: 5, phi_amplitude: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertOptions {
    #[serde(default = "zero_source")]
    pub reference: PotentialsSource,
    /// Measured DN matrix in the binary format; computed from the configured
    /// potentials when absent.
    #[serde(default)]
    pub measured_dn: Option<PathBuf>,
    #[serde(default)]
    pub recovery: RecoveryOptions,
}

fn zero_source() -> PotentialsSource {
    PotentialsSource::Zero
}

impl Default for InvertOptions {
    fn default() -> Self {
        InvertOptions {
            reference: PotentialsSource::Zero,
            measured_dn: None,
            recovery: RecoveryOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WalkSigma {
    Ones,
    Bump { amplitude: f64 },
    /// σ-kernel of the configured potentials.
    Potentials,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkOptions {
    pub sigma: WalkSigma,
    pub steps: usize,
    pub count: usize,
    /// Destination node for sampling; first interior node when absent.
    pub node: Option<usize>,
    pub max_jump: Option<f64>,
}

impl Default for WalkOptions {
    fn default() -> Self {
        WalkOptions {
            sigma: WalkSigma::Bump { amplitude: 1.0 },
            steps: 10,
            count: 100_000,
            node: None,
            max_jump: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReduceOptions {
    /// `γ = 1 + amplitude·U[0,1)` on `Ω`.
    pub amplitude: f64,
    /// Node CSV for γ; overrides the random draw.
    pub gamma: Option<PathBuf>,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { amplitude: 0.5, gamma: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for src in [&mut self.potentials, &mut self.invert.reference] {
            if let PotentialsSource::Files { a, q } = src {
                fix(a);
                if let Some(q) = q {
                    fix(q);
                }
            }
        }
        for p in [&mut self.solve.exterior, &mut self.invert.measured_dn, &mut self.reduce.gamma]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("adjointness", t.adjointness),
            ("decomposition", t.decomposition),
            ("assembly", t.assembly),
            ("solve_residual", t.solve_residual),
            ("dn_symmetry", t.dn_symmetry),
            ("dn_routes", t.dn_routes),
            ("gauge", t.gauge),
            ("conjugation_ratio", t.conjugation_ratio),
            ("recovery_fit", t.recovery_fit),
            ("recovery_change", t.recovery_change),
            ("recovery_parameter", t.recovery_parameter),
            ("walk_sum", t.walk_sum),
            ("generator", t.generator),
            ("reduction", t.reduction),
            ("fourier", t.fourier),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerance {name} = {v} must be positive"));
            }
        }
        let r = &self.invert.recovery;
        if !(r.reg >= 0.0) || !(r.cutoff > 0.0) {
            return bad("recovery reg must be nonnegative and cutoff positive".into());
        }
        if self.check_ops.samples == 0 {
            return bad("check_ops.samples must be positive".into());
        }
        if !(self.gauge.phi_amplitude > 0.0) {
            return bad("gauge.phi_amplitude must be positive".into());
        }
        if !(self.reduce.amplitude > -1.0) {
            return bad("reduce.amplitude must exceed -1 so that γ stays positive".into());
        }
        if self.walk.count == 0 {
            return bad("walk.count must be positive".into());
        }
        if let WalkSigma::Bump { amplitude } = self.walk.sigma {
            if !amplitude.is_finite() {
                return bad("walk bump amplitude must be finite".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (output directory excluded).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
