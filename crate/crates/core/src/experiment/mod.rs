//! Experiment configuration, named presets, the ablation harness and the
//! command implementations behind the `etnas` binary.

mod ablation;
mod commands;

pub use ablation::{arm_configs, run_ablation, AblationReport, Arm, ArmStats, CsvRow, ReplicationResult};
pub use commands::{
    cmd_ablation, cmd_search, genome_compose, genome_diff, genome_params, genome_show, genome_validate, load_genome,
    SearchSummary, TopModel,
};

use serde::{Deserialize, Serialize};

use crate::arch::ModelConfig;
use crate::evolution::{Budget, FitnessMode, ScheduleSwitch, SearchConfig, SearchError, SeedMode};
use crate::fitness::OracleConfig;

pub const PRESETS: [&str; 3] = ["desk", "paper-5.1", "paper-5.2"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub replications: usize,
    /// Step counts of the fixed-step control arms.
    pub fixed_steps: Vec<u64>,
    pub model: ModelConfig,
    pub search: SearchConfig,
    pub oracle: OracleConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config field {field}: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("{0}")]
    Domain(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config { .. } | ExperimentError::Usage(_) => 2,
            ExperimentError::Search(SearchError::Config { .. }) => 2,
            _ => 1,
        }
    }
}

fn config_error(field: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Option<Self> {
        let desk_search = SearchConfig {
            seed: 0,
            seed_mode: SeedMode::Transformer,
            population_capacity: 20,
            parent_subpop: 7,
            kill_subpop: 7,
            mutation_rate: 0.025,
            allow_no_normalization: false,
            mutation_switch: None,
            fitness_mode: FitnessMode::Pdh {
                step_increments: vec![10, 10, 10],
                models_per_hurdle: 50,
            },
            budget: Budget::Models(150),
            worker_count: 1,
            max_consecutive_failures: 20,
            count_initial_population: false,
        };
        let scaled_oracle = OracleConfig {
            step_unit: 1000.0,
            ..OracleConfig::default()
        };
        Some(match name {
            "desk" => ExperimentConfig {
                name: name.into(),
                replications: 20,
                fixed_steps: vec![5, 10, 30, 50],
                model: ModelConfig::default(),
                search: desk_search,
                oracle: OracleConfig::default(),
            },
            "paper-5.1" => ExperimentConfig {
                name: name.into(),
                replications: 3,
                fixed_steps: vec![15_000, 30_000, 180_000, 300_000],
                model: ModelConfig::default(),
                search: SearchConfig {
                    population_capacity: 100,
                    parent_subpop: 30,
                    kill_subpop: 30,
                    fitness_mode: FitnessMode::Pdh {
                        step_increments: vec![30_000; 6],
                        models_per_hurdle: 1000,
                    },
                    budget: Budget::Models(6000),
                    ..desk_search.clone()
                },
                oracle: scaled_oracle,
            },
            "paper-5.2" => ExperimentConfig {
                name: name.into(),
                replications: 2,
                fixed_steps: vec![30_000, 60_000, 240_000, 400_000],
                model: ModelConfig::default(),
                search: SearchConfig {
                    population_capacity: 100,
                    parent_subpop: 30,
                    kill_subpop: 30,
                    mutation_switch: Some(ScheduleSwitch {
                        at_model: 11_000,
                        rate: 0.01,
                        allow_no_normalization: true,
                    }),
                    fitness_mode: FitnessMode::Pdh {
                        step_increments: vec![60_000, 60_000, 120_000],
                        models_per_hurdle: 5000,
                    },
                    budget: Budget::Models(15_000),
                    ..desk_search
                },
                oracle: scaled_oracle,
            },
            _ => return None,
        })
    }

    /// Parses a config document. A top-level `preset = "NAME"` key starts
    /// from that preset and overlays the remaining keys on it.
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_error(&error_field(&e), e.message().to_string()))?;
        if let Some(preset) = doc.remove("preset") {
            let name = preset
                .as_str()
                .ok_or_else(|| config_error("preset", "must be a string"))?;
            let base = Self::preset(name).ok_or_else(|| config_error("preset", format!("unknown preset {name:?}")))?;
            let mut merged = toml::Table::try_from(base).expect("presets serialize");
            overlay(&mut merged, doc);
            doc = merged;
        }
        let config: ExperimentConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| config_error(&error_field(&e), e.message().to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn check(&self) -> Result<(), ExperimentError> {
        self.model.check().map_err(|m| config_error("model", m))?;
        self.oracle
            .check()
            .map_err(|e| config_error("oracle.features", e.to_string()))?;
        if self.oracle.step_unit <= 0.0 {
            return Err(config_error("oracle.step_unit", "must be positive"));
        }
        if self.replications == 0 {
            return Err(config_error("replications", "must be positive"));
        }
        if self.fixed_steps.is_empty() || self.fixed_steps.contains(&0) {
            return Err(config_error(
                "fixed_steps",
                "must be a non-empty list of positive counts",
            ));
        }
        self.search.check().map_err(|e| match e {
            SearchError::Config { field, message } => config_error(&format!("search.{field}"), message),
            other => ExperimentError::Search(other),
        })
    }
}

fn error_field(e: &toml::de::Error) -> String {
    // Messages from serde name the offending key in backticks.
    let msg = e.message();
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.check().unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
    }

    #[test]
    fn preset_overlay() {
        let cfg = ExperimentConfig::from_toml("preset = \"desk\"\n[search]\nseed = 9\n").unwrap();
        assert_eq!(cfg.search.seed, 9);
        assert_eq!(cfg.search.population_capacity, 20);
    }

    #[test]
    fn oversized_subpop_is_a_config_error() {
        let err = ExperimentConfig::from_toml("preset = \"desk\"\n[search]\nparent_subpop = 21\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("search.parent_subpop"), "{err}");
    }
}
