use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use villain_core::estimators::MeasureConfig;
use villain_core::oracle::OracleConfig;
use villain_core::samplers::ChainConfig;
use villain_core::{build_lattice, BoundaryCondition, LatticeGeometry};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_VAR: &str = "VILLAIN_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "villain-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sample,
    Measure,
    Verify,
    Bench,
    Ig,
    Green,
}

/// Everything that determines a run's output bytes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Filled from the subcommand.
    pub command: Option<Command>,
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub model: ModelConfig,
    pub chain: ChainSection,
    pub output: OutputConfig,
    pub oracle: OracleConfig,
    pub sample: SampleConfig,
    pub measure: MeasureSection,
    pub bench: BenchConfig,
    pub ig: IgConfig,
    pub green: GreenConfig,
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Radius of `[-n, n]²`.
    pub n: usize,
    pub bc: BoundaryCondition,
    /// Root vertex by coordinates; the default root otherwise.
    pub root_vertex: Option<[i64; 2]>,
    /// Root face as the unit square with this lower-left corner.
    pub root_face: Option<[i64; 2]>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { n: 1, bc: BoundaryCondition::Free, root_vertex: None, root_face: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub beta: f64,
    /// Cell degree (0 or 2) for degree-dependent models.
    pub degree: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { beta: 1.0, degree: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub sweeps: usize,
    /// Defaults to the radius heuristic when absent.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub tail_margin: f64,
    pub metropolis_step: i64,
    pub chains: usize,
    pub batches: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        let c = ChainConfig::default();
        let m = MeasureConfig::default();
        Self {
            sweeps: c.sweeps,
            burn_in: None,
            thin: c.thin,
            tail_margin: c.tail_margin,
            metropolis_step: c.metropolis_step,
            chains: m.chains,
            batches: m.batches,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Defaults to `$VILLAIN_OUTPUT_DIR`, then `villain-out`. Not part of
    /// the recorded config since it does not affect content.
    #[serde(skip_serializing)]
    pub dir: Option<PathBuf>,
    /// Each command has a natural default.
    pub format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SampleModel {
    Villain,
    CoulombLocal,
    CoulombMetropolis,
    Iv,
    Gff,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub model: SampleModel,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { model: SampleModel::Villain }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    /// Variance of the Coulomb potential against the square at `at`.
    PotentialVariance,
    /// Coulomb characteristic function between squares `at` and `to`.
    CharFunction,
    /// Spin two-point function between vertices `at` and `to`.
    TwoPoint,
    /// Vortex fluctuation on the edge from vertex `at` to vertex `to`.
    TildeM,
    /// Gradient window around vertex `at`.
    Window,
    /// Maxima of the wired IV-GFF over `n_list`.
    Maximum,
    /// Three-way variance identity for `count` random test forms.
    VarianceIdentity,
    /// Covariance and correlation z-scores of the decoupled fields.
    Decoupling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureSection {
    pub observable: Observable,
    pub at: [i64; 2],
    pub to: [i64; 2],
    pub radius: usize,
    pub eps: f64,
    pub n_list: Vec<usize>,
    pub alphas: Vec<f64>,
    pub count: usize,
    pub z_limit: f64,
}

impl Default for MeasureSection {
    fn default() -> Self {
        Self {
            observable: Observable::PotentialVariance,
            at: [0, 0],
            to: [1, 0],
            radius: 1,
            eps: 0.5,
            n_list: vec![16, 32, 64],
            alphas: vec![1.5, 2.0],
            count: 5,
            z_limit: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_list: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n_list: vec![8, 16, 32] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IgConfig {
    /// Emit the per-`a` table; otherwise a one-row summary.
    pub table: bool,
    /// Grid points on `a ∈ [0, 1]`.
    pub a_points: usize,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self { table: false, a_points: 21 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenConfig {
    /// Source vertex (degree 0) or square (degree 2); the origin by default.
    pub from: Option<[i64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random test functions per transfer identity.
    pub transfers: usize,
    /// Relative tolerance for every hard assertion.
    pub tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { transfers: 5, tolerance: 1e-6 }
    }
}

/// Reads a TOML or JSON config, chosen by extension. Errors name the
/// offending field path.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let located = |path_str: String, msg: String| CliError::Usage(format!("{}: field `{path_str}`: {msg}", path.display()));
    if is_json {
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| located(e.path().to_string(), e.inner().to_string()))
    } else {
        let de = toml::Deserializer::new(&text);
        serde_path_to_error::deserialize(de).map_err(|e| located(e.path().to_string(), e.inner().message().to_string()))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: &str| Err(CliError::Usage(format!("field `{field}`: {msg}")));
        if self.geometry.n == 0 {
            return bad("geometry.n", "radius must be >= 1");
        }
        if !(self.model.beta > 0.0 && self.model.beta.is_finite()) {
            return bad("model.beta", "must be finite and > 0");
        }
        if self.model.degree != 0 && self.model.degree != 2 {
            return bad("model.degree", "must be 0 or 2");
        }
        if self.chain.thin == 0 {
            return bad("chain.thin", "must be >= 1");
        }
        if self.chain.chains == 0 {
            return bad("chain.chains", "must be >= 1");
        }
        if self.chain.batches < villain_core::estimators::MIN_BATCHES {
            return bad("chain.batches", "must be >= 32");
        }
        if self.ig.a_points < 2 {
            return bad("ig.a_points", "must be >= 2");
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<LatticeGeometry, CliError> {
        let gc = &self.geometry;
        let mut g = build_lattice(gc.n, gc.bc)?;
        if let Some([x, y]) = gc.root_vertex {
            let v = g.vertex_at(x, y).ok_or_else(|| CliError::Usage(format!("field `geometry.root_vertex`: no vertex at ({x}, {y})")))?;
            g = g.with_root_vertex(v)?;
        }
        if let Some([x, y]) = gc.root_face {
            let f = g.square_at(x, y).ok_or_else(|| CliError::Usage(format!("field `geometry.root_face`: no square at ({x}, {y})")))?;
            g = g.with_root_face(f)?;
        }
        Ok(g)
    }

    pub fn chain_config(&self) -> ChainConfig {
        let c = &self.chain;
        ChainConfig {
            seed: self.seed,
            chain: 0,
            sweeps: c.sweeps,
            burn_in: c.burn_in.unwrap_or_else(|| ChainConfig::heuristic_burn_in(self.geometry.n)),
            thin: c.thin,
            tail_margin: c.tail_margin,
            metropolis_step: c.metropolis_step,
        }
    }

    pub fn measure_config(&self) -> MeasureConfig {
        MeasureConfig { chain: self.chain_config(), chains: self.chain.chains, batches: self.chain.batches }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_VAR).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}
