use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::compiler::{HardwareLimits, DEFAULT_ACCURACY};
use crate::dataplane::{DEFAULT_PROBES, DEFAULT_ROWS, DEFAULT_TIMEOUT_US};
use crate::forest::{param_grid, ClassWeights, ForestParams, DEFAULT_FOLDS};
use crate::trainer::TrainerConfig;

/// Settings shared by every command. Loaded from a TOML file; command-line
/// flags override individual keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub capture: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub thr_s: f64,
    pub thr_c: f64,
    /// Relative comparison accuracy for threshold quantization.
    pub accuracy: f64,
    pub packet_counts: Vec<usize>,
    pub seed: u64,
    pub folds: usize,
    pub max_depths: Vec<usize>,
    pub tree_counts: Vec<usize>,
    pub hardware: HardwareLimits,
    pub rows: usize,
    pub probes: usize,
    pub timeout_us: u64,
    pub hash_seed: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            capture: None,
            labels: None,
            out_dir: PathBuf::from("out"),
            thr_s: 0.9,
            thr_c: 0.0,
            accuracy: DEFAULT_ACCURACY,
            packet_counts: (1..=20).collect(),
            seed: 0,
            folds: DEFAULT_FOLDS,
            max_depths: vec![4, 8],
            tree_counts: vec![8, 16],
            hardware: HardwareLimits::default(),
            rows: DEFAULT_ROWS,
            probes: DEFAULT_PROBES,
            timeout_us: DEFAULT_TIMEOUT_US,
            hash_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: &str| Err(CliError::Usage(m.to_string()));
        if !(0.0..=1.0).contains(&self.thr_s) {
            return fail("thr_s must lie in [0, 1]");
        }
        if !(self.thr_c >= 0.0) {
            return fail("thr_c must be non-negative");
        }
        if !(self.accuracy > 0.0) {
            return fail("accuracy must be positive");
        }
        if self.packet_counts.is_empty() || self.packet_counts.contains(&0) {
            return fail("packet_counts must be a non-empty list of positive counts");
        }
        if self.max_depths.is_empty() || self.tree_counts.is_empty() {
            return fail("max_depths and tree_counts must be non-empty");
        }
        if self.folds < 2 {
            return fail("folds must be at least 2");
        }
        if self.rows == 0 || self.probes == 0 {
            return fail("rows and probes must be at least 1");
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<ForestParams> {
        param_grid(
            &self.max_depths,
            &self.tree_counts,
            &[ClassWeights::Uniform, ClassWeights::InverseFrequency],
            self.seed,
        )
    }

    pub fn trainer(&self) -> TrainerConfig {
        TrainerConfig {
            thr_s: self.thr_s,
            grid: self.grid(),
            folds: self.folds,
            ..TrainerConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = RunConfig::default();
        assert_eq!(toml::from_str::<RunConfig>(&c.to_toml()).unwrap(), c);
        let partial: RunConfig = toml::from_str("thr_s = 0.75\n[hardware]\nmax_trees = 8\nmax_depth = 6\nstages = 7\n").unwrap();
        assert_eq!(partial.thr_s, 0.75);
        assert_eq!(partial.hardware.max_trees, 8);
        assert_eq!(partial.rows, DEFAULT_ROWS);
        assert!(toml::from_str::<RunConfig>("thr = 1").is_err());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig {
            packet_counts: vec![0, 1],
            ..RunConfig::default()
        };
        assert!(matches!(bad.validate(), Err(CliError::Usage(_))));
    }
}
