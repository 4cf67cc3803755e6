//! Scenario files: strict TOML, every field defaulted, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use csl_core::crossing::CrossingScenario;
use csl_core::envelope::Growth;
use csl_core::levy::{BoundaryPair, SubordinatorModel, TailTable};
use csl_core::path::DEFAULT_JUMP_RATE;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Classify,
    Crossing,
    Doob,
    Qh,
    Explosion,
    Envelope,
    Bounds,
    Selftest,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Classify => "classify",
            Experiment::Crossing => "crossing",
            Experiment::Doob => "doob",
            Experiment::Qh => "qh",
            Experiment::Explosion => "explosion",
            Experiment::Envelope => "envelope",
            Experiment::Bounds => "bounds",
            Experiment::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// 0 means all available cores.
    pub workers: usize,
    pub model: ModelConfig,
    pub boundary: BoundaryConfig,
    pub simulation: SimulationConfig,
    pub classify: ClassifyConfig,
    pub crossing: CrossingConfig,
    pub doob: DoobConfig,
    pub qh: QhConfig,
    pub explosion: ExplosionConfig,
    pub envelope: EnvelopeConfig,
    pub bounds: BoundsConfig,
    /// Directory that relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            experiment: None,
            seed: 1,
            output_dir: PathBuf::from("csl-out"),
            workers: 0,
            model: ModelConfig::default(),
            boundary: BoundaryConfig::default(),
            simulation: SimulationConfig::default(),
            classify: ClassifyConfig::default(),
            crossing: CrossingConfig::default(),
            doob: DoobConfig::default(),
            qh: QhConfig::default(),
            explosion: ExplosionConfig::default(),
            envelope: EnvelopeConfig::default(),
            bounds: BoundsConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Stable,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub alpha: f64,
    pub c: f64,
    /// CSV with header `x,tail`, for `kind = "custom"`.
    pub tail_file: Option<PathBuf>,
    pub drift: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Stable,
            alpha: 0.5,
            c: 1.0,
            tail_file: None,
            drift: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Monomial,
    Monolog,
    CustomTable,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub kind: BoundaryKind,
    pub gamma: f64,
    pub log_power: f64,
    pub offset: f64,
    /// CSV with header `t,f`, for `kind = "custom-table"`.
    pub table_file: Option<PathBuf>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            kind: BoundaryKind::Monomial,
            gamma: 0.25,
            log_power: 1.0,
            offset: 0.0,
            table_file: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// `Π̄(ε)` of the compound Poisson approximation; ignored when `epsilon` is set.
    pub jump_rate: f64,
    pub epsilon: Option<f64>,
    pub n: u64,
    pub horizon: f64,
    pub t_schedule: Vec<f64>,
    pub h: f64,
    pub y: Option<f64>,
    pub bins: usize,
    pub u_grid: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            jump_rate: DEFAULT_JUMP_RATE,
            epsilon: None,
            n: 100_000,
            horizon: 50.0,
            t_schedule: vec![10.0, 20.0, 40.0, 80.0],
            h: 2.0,
            y: None,
            bins: 10,
            u_grid: None,
            t_grid: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub rel_tol: f64,
    pub max_upper: f64,
    /// `i`, `ia` or `ii`; empty skips the regularity validation.
    pub case: String,
    /// Points of the integrand curve written to `classify.csv`.
    pub curve_points: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            rel_tol: 1e-9,
            max_upper: 1e280,
            case: String::new(),
            curve_points: 200,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossingConfig {
    /// Sample paths written as `path_<i>.csv`.
    pub dump_paths: u64,
    /// Runs the diagnostics table on `t_grid` (or `t_schedule`).
    pub diagnostics: bool,
}

impl Default for CrossingConfig {
    fn default() -> Self {
        CrossingConfig {
            dump_paths: 0,
            diagnostics: true,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoobConfig {
    /// Unconditioned attempts for the left side; defaults to `10 n`.
    pub n_conditioned: Option<u64>,
    /// Explicit bin edges; defaults to log bins on `[g(h), g(T)]` plus `[g(T), ∞)`.
    pub edges: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QhConfig {
    /// Several `y` values on common streams; overrides `simulation.y`.
    pub ys: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplosionConfig {
    pub plateau_tol: f64,
    pub t_start: f64,
    pub doublings: u32,
    pub min_survivors: u64,
    pub cdf_points: usize,
    /// When set and `Φ` converges, compares the conditioned big-jump time with the law at this `h`.
    pub jump_check_h: Option<f64>,
}

impl Default for ExplosionConfig {
    fn default() -> Self {
        ExplosionConfig {
            plateau_tol: 0.01,
            t_start: 1.0,
            doublings: 14,
            min_survivors: 10,
            cdf_points: 200,
            jump_check_h: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeConfig {
    /// `kind:param` with kind in constant, log-power, exp-log-power, power.
    pub growth: Vec<String>,
    pub h_grid: Vec<f64>,
    /// `h` values of the conditioned fractions; empty skips the simulation.
    pub hs: Vec<f64>,
    /// Unconditioned attempts for the conditioned fractions.
    pub attempts: u64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            growth: vec!["log-power:2".into(), "exp-log-power:2".into()],
            h_grid: (1..=12).map(|k| 10f64.powi(k)).collect(),
            hs: vec![5.0, 10.0, 20.0],
            attempts: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    /// `H` of the Chernoff bound.
    pub h_level: f64,
    pub ts: Vec<f64>,
    #[serde(rename = "as")]
    pub as_: Vec<f64>,
    pub bs: Vec<f64>,
    pub laws: bool,
    pub law_x: f64,
    pub law_t: f64,
    pub law_jump_rate: f64,
    pub significance: f64,
    pub lemma_a: f64,
    pub lemma_b: f64,
    /// `[y, h]` pairs of the shifted-boundary checks.
    pub lemma_points: Vec<[f64; 2]>,
    pub lemma_span: f64,
    pub excess_t_max: Vec<f64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            h_level: 0.1,
            ts: vec![0.5, 1.0, 2.0],
            as_: vec![1.5, 2.0, 3.0],
            bs: vec![3.0, 6.0, 12.0],
            laws: true,
            law_x: 1.0,
            law_t: 4.0,
            law_jump_rate: 20.0,
            significance: 0.01,
            lemma_a: 4.0,
            lemma_b: 1.0,
            lemma_points: vec![[2.0, 1.0], [16.0, 1.0], [20.0, 2.0], [64.0, 2.0]],
            lemma_span: 1e6,
            excess_t_max: vec![1e3, 1e5, 1e7, 1e9],
        }
    }
}

impl FromStr for ScenarioConfig {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        toml::from_str(s).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ScenarioConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn build_model(&self) -> Result<SubordinatorModel, CliError> {
        let m = &self.model;
        let model = match m.kind {
            ModelKind::Stable => SubordinatorModel::stable(m.alpha, m.c)?,
            ModelKind::Custom => {
                let file = m
                    .tail_file
                    .as_ref()
                    .ok_or_else(|| CliError::Config("model.kind = \"custom\" needs model.tail_file".into()))?;
                let pts = read_pairs(&self.resolve(file), ["x", "tail"])?;
                SubordinatorModel::from_table(TailTable::new(&pts)?)
            }
        };
        if m.drift != 0.0 {
            Ok(model.with_drift(m.drift)?)
        } else {
            Ok(model)
        }
    }

    pub fn build_boundary(&self) -> Result<BoundaryPair, CliError> {
        let b = &self.boundary;
        Ok(match b.kind {
            BoundaryKind::Monomial => BoundaryPair::monomial(b.gamma, b.offset)?,
            BoundaryKind::Monolog => BoundaryPair::monolog(b.gamma, b.log_power, b.offset)?,
            BoundaryKind::CustomTable => {
                let file = b.table_file.as_ref().ok_or_else(|| {
                    CliError::Config("boundary.kind = \"custom-table\" needs boundary.table_file".into())
                })?;
                BoundaryPair::table(&read_pairs(&self.resolve(file), ["t", "f"])?)?
            }
        })
    }

    pub fn build_scenario(&self) -> Result<CrossingScenario, CliError> {
        let s = CrossingScenario::new(self.build_model()?, self.build_boundary()?, self.simulation.epsilon, None)?;
        if self.simulation.epsilon.is_some() {
            Ok(s)
        } else {
            Ok(s.with_jump_rate(self.simulation.jump_rate)?)
        }
    }

    pub fn growths(&self) -> Result<Vec<Growth>, CliError> {
        self.envelope
            .growth
            .iter()
            .map(|g| g.parse::<Growth>().map_err(CliError::from))
            .collect()
    }
}

/// Two-column numeric CSV with the given header.
pub fn read_pairs(path: &Path, header: [&str; 2]) -> Result<Vec<(f64, f64)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    if head != header {
        return Err(CliError::Config(format!(
            "{}: expected header `{}`",
            path.display(),
            header.join(",")
        )));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let cells: Vec<&str> = l.split(',').map(str::trim).collect();
            let parse = |s: &str| s.parse::<f64>().ok();
            match cells.as_slice() {
                [a, b] => parse(a).zip(parse(b)),
                _ => None,
            }
            .ok_or_else(|| CliError::Config(format!("{}: bad row {}: `{l}`", path.display(), i + 2)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: ScenarioConfig = "".parse().unwrap();
        assert_eq!(c.seed, 1);
        assert_eq!(c.simulation.n, 100_000);
        assert_eq!(c.simulation.jump_rate, 1000.0);
        assert_eq!(c.bounds.as_, vec![1.5, 2.0, 3.0]);
        assert!(c.experiment.is_none());
    }

    #[test]
    fn misspelt_key_is_named() {
        let err = "[model]\nalpha_ = 0.5\n".parse::<ScenarioConfig>().unwrap_err();
        assert!(err.to_string().contains("alpha_"), "{err}");
    }

    #[test]
    fn unknown_section_and_experiment_rejected() {
        assert!("[modle]\nalpha = 0.5\n".parse::<ScenarioConfig>().is_err());
        assert!("experiment = \"dob\"\n".parse::<ScenarioConfig>().is_err());
    }

    #[test]
    fn sections_parse() {
        let c: ScenarioConfig = r#"
experiment = "envelope"
seed = 7
[model]
alpha = 0.3
[boundary]
kind = "monolog"
gamma = 0.5
[envelope]
growth = ["power:0.5"]
[bounds]
as = [2.0]
"#
        .parse()
        .unwrap();
        assert_eq!(c.experiment, Some(Experiment::Envelope));
        assert_eq!(c.boundary.kind, BoundaryKind::Monolog);
        assert_eq!(c.bounds.as_, vec![2.0]);
        assert_eq!(c.growths().unwrap().len(), 1);
        assert!(c.build_boundary().is_ok());
    }

    #[test]
    fn custom_model_needs_a_file() {
        let c: ScenarioConfig = "[model]\nkind = \"custom\"\n".parse().unwrap();
        assert!(matches!(c.build_model(), Err(CliError::Config(_))));
    }
}
