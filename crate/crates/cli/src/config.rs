//! Run configuration files. Command-line flags take precedence over values
//! read from the file, which take precedence over built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tskicfnn::{Mode, TrainConfig};

use crate::CliError;

/// Contents of a `--config` TOML file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub protocol: Option<String>,
    pub rules: Option<usize>,
    pub seeds: Option<u64>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub verbose: Option<bool>,
    #[serde(default)]
    pub training: TrainingTable,
}

/// The `[training]` table.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingTable {
    pub eta0: Option<f64>,
    pub delta_mu: Option<f64>,
    pub delta_e: Option<f64>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub zeta: Option<f64>,
    pub iter_max: Option<usize>,
    pub t_max: Option<usize>,
    pub tprime_max: Option<usize>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Hyperparameter flags shared by `train` and `benchmark`.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct TrainingFlags {
    /// Initial learning rate
    #[arg(long)]
    pub eta0: Option<f64>,
    /// Premise-phase stop threshold
    #[arg(long)]
    pub delta_mu: Option<f64>,
    /// Consequent-phase stop threshold
    #[arg(long)]
    pub delta_e: Option<f64>,
    /// Epoch-level stop threshold
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Weight of the newest step in each parameter's running step average
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Factor applied to a parameter's rate when its step opposes the average
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Maximum number of epochs
    #[arg(long)]
    pub iter_max: Option<usize>,
    /// Maximum premise steps per epoch
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Maximum consequent steps per epoch
    #[arg(long)]
    pub tprime_max: Option<usize>,
}

/// Layers defaults, the file's `[training]` table, then flags.
pub fn merge_training(
    file: &TrainingTable,
    flags: &TrainingFlags,
    mode: Option<Mode>,
    seed: Option<u64>,
) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::default();
    macro_rules! layer {
        ($($field:ident),*) => {
            $(
                if let Some(v) = file.$field { cfg.$field = v; }
                if let Some(v) = flags.$field { cfg.$field = v; }
            )*
        };
    }
    layer!(eta0, delta_mu, delta_e, epsilon, alpha, zeta, iter_max, t_max, tprime_max);
    if let Some(m) = mode.or(file.mode) {
        cfg.mode = m;
    }
    if let Some(s) = seed.or(file.seed) {
        cfg.seed = s;
    }
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: FileConfig = toml::from_str(
            "rules = 4\n[training]\neta0 = 0.01\niter_max = 7\nmode = \"backprop\"\n",
        )
        .unwrap();
        let flags = TrainingFlags {
            eta0: Some(0.5),
            ..TrainingFlags::default()
        };
        let cfg = merge_training(&file.training, &flags, None, Some(9)).unwrap();
        assert_eq!(cfg.eta0, 0.5);
        assert_eq!(cfg.iter_max, 7);
        assert_eq!(cfg.mode, Mode::Backprop);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.zeta, TrainConfig::default().zeta);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("rulez = 2\n").is_err());
        assert!(toml::from_str::<FileConfig>("[training]\nlr = 2\n").is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let flags = TrainingFlags {
            alpha: Some(2.0),
            ..TrainingFlags::default()
        };
        let err = merge_training(&TrainingTable::default(), &flags, None, None).unwrap_err();
        assert!(matches!(err, CliError::Config(m) if m.contains("alpha")));
    }
}
