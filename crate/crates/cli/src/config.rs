//! Experiment configuration: one TOML file with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skewlab::disintegration::EnsembleConfig;
use skewlab::kifer::{RandomCircleSystem, MIN_STEPS, MIN_ULAM_BINS};
use skewlab::lyapunov::Direction;
use skewlab::rng::derive_seed;
use skewlab::SkewSystem;
use toml::Value;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Fibration,
    Spectrum,
    Disintegrate,
    Covering,
    Kifer,
    FullPipeline,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Fibration => "fibration",
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Disintegrate => "disintegrate",
            ExperimentKind::Covering => "covering",
            ExperimentKind::Kifer => "kifer",
            ExperimentKind::FullPipeline => "full-pipeline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub system: SystemConfig,
    pub fibration: FibrationConfig,
    pub spectrum: SpectrumConfig,
    pub disintegration: DisintegrationConfig,
    pub covering: CoveringConfig,
    pub kifer: KiferConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::FullPipeline,
            seed: 0,
            output_dir: PathBuf::from("out"),
            system: SystemConfig::default(),
            fibration: FibrationConfig::default(),
            spectrum: SpectrumConfig::default(),
            disintegration: DisintegrationConfig::default(),
            covering: CoveringConfig::default(),
            kifer: KiferConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub a: f64,
    pub b: f64,
    pub k: u32,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { a: 0.05, b: 0.05, k: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FibrationConfig {
    /// Base grid is `n_b × n_b`.
    pub n_b: usize,
    /// Nodes per leaf.
    pub n_f: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Points sampled on stored leaves for the equivariance check.
    pub check_points: usize,
    /// When false a failed solve lets later stages run without a model.
    pub required: bool,
}

impl Default for FibrationConfig {
    fn default() -> Self {
        Self {
            n_b: 64,
            n_f: 64,
            tol: 1e-6,
            max_iter: 200,
            check_points: 10_000,
            required: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub n: usize,
    /// Starting point; drawn from the run seed when absent.
    pub start: Option<[f64; 3]>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            n: 1_000_000,
            start: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisintegrationConfig {
    pub direction: Direction,
    pub fibers: usize,
    pub points_per_fiber: usize,
    pub orbit_budget: u64,
    pub snap_interval: usize,
    pub n_h: usize,
    /// Atom scale; ten fiber-grid spacings when absent.
    pub delta: Option<f64>,
    pub label_cells: usize,
    /// Extra tolerance on atom positions in the shift-symmetry check.
    pub symmetry_slack: f64,
}

impl Default for DisintegrationConfig {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        Self {
            direction: Direction::Backward,
            fibers: e.fibers,
            points_per_fiber: e.points_per_fiber,
            orbit_budget: e.orbit_budget,
            snap_interval: e.snap_interval,
            n_h: e.histogram_bins,
            delta: None,
            label_cells: e.label_cells,
            symmetry_slack: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoveringConfig {
    /// Maximal number of arcs.
    #[serde(rename = "N")]
    pub n_arcs: usize,
    pub schedule: Vec<u64>,
}

impl Default for CoveringConfig {
    fn default() -> Self {
        Self {
            n_arcs: 8,
            schedule: vec![100_000, 1_000_000, 10_000_000],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KiferConfig {
    pub p: f64,
    pub eps: f64,
    pub kappa: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    /// Bins shared by the Monte Carlo and Ulam estimates.
    pub n_h: usize,
    pub refinement: Vec<usize>,
    pub eps_sweep: Vec<f64>,
    pub sweep_steps: usize,
    /// Half-width of the arc around the sink used in the sweep.
    pub sink_radius: f64,
    /// Candidate atoms `[x, weight]` for the impossibility check.
    pub candidate_atoms: Vec<[f64; 2]>,
}

impl Default for KiferConfig {
    fn default() -> Self {
        Self {
            p: 0.9,
            eps: 0.01,
            kappa: 0.5,
            n_steps: 10_000_000,
            burn_in: 10_000,
            n_h: 1024,
            refinement: vec![256, 512, 1024, 2048, 4096],
            eps_sweep: vec![0.1, 0.03, 0.01, 0.003],
            sweep_steps: 1_000_000,
            sink_radius: 0.05,
            candidate_atoms: vec![[0.0, 0.5], [0.2, 0.1]],
        }
    }
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {reason}"))
}

fn module_error(section: &str, e: skewlab::Error) -> CliError {
    match e {
        skewlab::Error::InvalidParameter { name, reason } => invalid(&format!("{section}.{name}"), reason),
        other => invalid(section, other),
    }
}

impl ExperimentConfig {
    pub fn skew_system(&self) -> Result<SkewSystem, CliError> {
        SkewSystem::new(self.system.a, self.system.b, self.system.k).map_err(|e| module_error("system", e))
    }

    pub fn circle_system(&self, eps: f64) -> Result<RandomCircleSystem, CliError> {
        RandomCircleSystem::new(self.kifer.p, eps, self.kifer.kappa).map_err(|e| module_error("kifer", e))
    }

    pub fn delta(&self) -> f64 {
        self.disintegration.delta.unwrap_or(10.0 / self.fibration.n_f as f64)
    }

    /// Ensemble settings for the disintegration stages, with per-stage seeds.
    pub fn ensemble(&self) -> EnsembleConfig {
        let d = &self.disintegration;
        EnsembleConfig {
            fibers: d.fibers,
            points_per_fiber: d.points_per_fiber,
            orbit_budget: d.orbit_budget,
            snap_interval: d.snap_interval,
            histogram_bins: d.n_h,
            delta: self.delta(),
            label_cells: d.label_cells,
            seed: derive_seed(self.seed, "fibers"),
            sampling_seed: derive_seed(self.seed, "jitter"),
        }
    }

    /// Checks every field the run will use before any computation starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let kind = self.kind;
        let torus = kind != ExperimentKind::Kifer;
        if torus {
            self.skew_system()?;
            let f = &self.fibration;
            if f.n_b < 2 {
                return Err(invalid("fibration.n_b", "must be at least 2"));
            }
            if f.n_f < 4 {
                return Err(invalid("fibration.n_f", "must be at least 4"));
            }
            if !(f.tol > 0.0 && f.tol.is_finite()) {
                return Err(invalid("fibration.tol", "must be positive"));
            }
            if f.max_iter == 0 {
                return Err(invalid("fibration.max_iter", "must be at least 1"));
            }
            if self.spectrum.n < 10_000 {
                return Err(invalid("spectrum.n", "must be at least 10000"));
            }
            if let Some(p) = self.spectrum.start {
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("spectrum.start", "coordinates must be finite"));
                }
            }
            self.ensemble().validate().map_err(|e| module_error("disintegration", e))?;
            if !(self.disintegration.symmetry_slack >= 0.0) {
                return Err(invalid("disintegration.symmetry_slack", "must be nonnegative"));
            }
            if self.covering.n_arcs == 0 {
                return Err(invalid("covering.N", "must be at least 1"));
            }
            if self.covering.schedule.is_empty() || self.covering.schedule.contains(&0) {
                return Err(invalid("covering.schedule", "must be a nonempty list of positive orbit lengths"));
            }
        }
        if kind == ExperimentKind::Kifer {
            let k = &self.kifer;
            self.circle_system(k.eps)?;
            for &e in &k.eps_sweep {
                self.circle_system(e)?;
            }
            if k.n_steps < MIN_STEPS || k.sweep_steps < MIN_STEPS {
                return Err(invalid("kifer.n_steps", format!("orbit lengths must be at least {MIN_STEPS}")));
            }
            if k.n_h < MIN_ULAM_BINS {
                return Err(invalid("kifer.n_h", format!("must be at least {MIN_ULAM_BINS}")));
            }
            if k.refinement.iter().any(|&b| b < MIN_ULAM_BINS) {
                return Err(invalid("kifer.refinement", format!("bin counts must be at least {MIN_ULAM_BINS}")));
            }
            if !(k.sink_radius > 0.0 && k.sink_radius < 0.5) {
                return Err(invalid("kifer.sink_radius", "must lie in (0, 0.5)"));
            }
            if k.candidate_atoms.iter().any(|a| !(a[1] > 0.0 && a[1] <= 1.0)) {
                return Err(invalid("kifer.candidate_atoms", "weights must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Parses a config file (or the defaults when `path` is `None`), applies
/// `key=value` overrides with dotted keys, and deserializes the result.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for item in overrides {
        apply_override(&mut root, item)?;
    }
    Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Validation(e.message().to_string()))
}

fn apply_override(root: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("override key `{key}` is malformed")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Validation(format!("override key `{key}`: `{part}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = load(
            None,
            &[
                "system.a=0.03".into(),
                "covering.schedule=[10, 20]".into(),
                "kind=kifer".into(),
                "disintegration.direction=forward".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.system.a, 0.03);
        assert_eq!(c.covering.schedule, vec![10, 20]);
        assert_eq!(c.kind, ExperimentKind::Kifer);
        assert_eq!(c.disintegration.direction, Direction::Forward);
    }

    #[test]
    fn invalid_kappa_names_the_field() {
        let c = load(None, &["kind=kifer".into(), "kifer.kappa=1.5".into()]).unwrap();
        match c.validate() {
            Err(CliError::Validation(msg)) => assert!(msg.starts_with("kifer.kappa"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(load(None, &["system.c=1".into()]).is_err());
    }
}
