use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ablation::{run_ablation, AblationReport};
use super::{ExperimentConfig, ExperimentError};
use crate::arch::{at_scale, graph_report, natural_scale, scale_dimensions, ModelConfig};
use crate::evolution::{first_gate_stats, resume_search, run_search, top_k, RunOptions, SearchResult};
use crate::fitness::{perplexity_from_fitness, Evaluator, SimulatedOracle};
use crate::search_space::{deserialize, diff, serialize, validate, Genome, ValidationConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopModel {
    pub model_id: u64,
    pub parent_id: Option<u64>,
    pub genome_id: String,
    pub steps: u64,
    pub fitness: f64,
    pub perplexity: f64,
    pub true_asymptote: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub name: String,
    pub seed: u64,
    pub completed: bool,
    pub children_issued: u64,
    pub models_evaluated: u64,
    pub steps_consumed: u64,
    pub hurdles: Vec<f64>,
    pub first_gate_stopped: usize,
    pub first_gate_faced: usize,
    pub top: Vec<TopModel>,
}

fn summarize(config: &ExperimentConfig, result: &SearchResult, oracle: &SimulatedOracle) -> SearchSummary {
    let (stopped, faced) = first_gate_stats(&result.events);
    SearchSummary {
        name: config.name.clone(),
        seed: config.search.seed,
        completed: result.completed,
        children_issued: result.children_issued,
        models_evaluated: result.ledger.models_evaluated,
        steps_consumed: result.ledger.total_steps_consumed,
        hurdles: result.hurdles.clone(),
        first_gate_stopped: stopped,
        first_gate_faced: faced,
        top: top_k(result, 5)
            .into_iter()
            .map(|m| TopModel {
                model_id: m.created_index,
                parent_id: m.parent_id,
                genome_id: m.genome.id().to_string(),
                steps: m.steps_trained,
                fitness: m.fitness,
                perplexity: perplexity_from_fitness(m.fitness),
                true_asymptote: oracle.true_fitness(&m.genome),
            })
            .collect(),
    }
}

/// Runs (or resumes) a search, writing `config.toml`, `events.jsonl`,
/// `checkpoint.json`, `summary.json` and `best.genome` under `out_dir`.
pub fn cmd_search(
    config: &ExperimentConfig,
    out_dir: &Path,
    resume: Option<&Path>,
    halt_after: Option<u64>,
) -> Result<SearchSummary, ExperimentError> {
    config.check()?;
    fs::create_dir_all(out_dir)?;
    let oracle = SimulatedOracle::new(config.oracle.clone()).map_err(|e| ExperimentError::Domain(e.to_string()))?;
    let options = RunOptions {
        events_path: Some(out_dir.join("events.jsonl")),
        checkpoint_path: Some(out_dir.join("checkpoint.json")),
        checkpoint_every: 50,
        halt_after,
    };
    let result = match resume {
        Some(checkpoint) => resume_search(checkpoint, &oracle, &options)?,
        None => {
            fs::write(out_dir.join("config.toml"), config.to_toml())?;
            run_search(&config.search, &config.model, &oracle, &options)?
        }
    };
    let summary = summarize(config, &result, &oracle);
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summaries serialize"),
    )?;
    if let Some(best) = top_k(&result, 1).first() {
        fs::write(out_dir.join("best.genome"), serialize(&best.genome))?;
    }
    Ok(summary)
}

/// Runs the ablation and writes `config.toml`, `report.json` and
/// `report.csv` under `out_dir`.
pub fn cmd_ablation(
    config: &ExperimentConfig,
    out_dir: &Path,
    threads: usize,
) -> Result<AblationReport, ExperimentError> {
    let (report, rows) = run_ablation(config, threads)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.toml"), config.to_toml())?;
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("reports serialize"),
    )?;
    let mut csv = String::from(super::CsvRow::HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.to_line());
        csv.push('\n');
    }
    fs::write(out_dir.join("report.csv"), csv)?;
    Ok(report)
}

impl AblationReport {
    /// Human-readable table of per-arm statistics and win rates.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ablation {} ({} replications)", self.name, self.replications);
        let _ = writeln!(
            out,
            "{:<12} {:>12} {:>10} {:>10} {:>12} {:>10}",
            "arm", "mean_true", "sd", "models", "steps", "max_dev"
        );
        for a in &self.arms {
            let _ = writeln!(
                out,
                "{:<12} {:>12.5} {:>10.5} {:>10.1} {:>12.1} {:>9.2}%",
                a.arm,
                a.mean_best_true_fitness,
                a.sd_best_true_fitness,
                a.mean_models_evaluated,
                a.mean_steps_consumed,
                100.0 * a.max_budget_deviation
            );
        }
        let _ = writeln!(out, "win rate of pdh_seed:");
        for (j, a) in self.arms.iter().enumerate().skip(1) {
            let _ = writeln!(out, "  vs {:<12} {:.2}", a.arm, self.win_rates[0][j]);
        }
        let _ = writeln!(
            out,
            "pdh_random strictly worst in {:.0}% of replications",
            100.0 * self.random_worst_fraction
        );
        out
    }
}

pub fn load_genome(path: &Path) -> Result<Genome, ExperimentError> {
    let text = fs::read_to_string(path)?;
    deserialize(&text).map_err(|e| ExperimentError::Domain(format!("{}: {e}", path.display())))
}

pub fn genome_show(genome: &Genome) -> String {
    format!("# genome id {}\n{}", genome.id(), serialize(genome))
}

/// The report text and whether the genome is valid.
pub fn genome_validate(genome: &Genome, model: &ModelConfig) -> (String, bool) {
    let report = validate(
        genome,
        &ValidationConfig {
            model: model.clone(),
            ..ValidationConfig::default()
        },
    );
    if report.valid() {
        return ("valid\n".into(), true);
    }
    let mut out = String::from("invalid\n");
    for f in &report.failures {
        let _ = writeln!(out, "{f}");
    }
    (out, false)
}

pub fn genome_diff(a: &Genome, b: &Genome) -> String {
    let mut out = String::from("section field\tblock\tbranch\tvalue_a\tvalue_b\n");
    for d in diff(a, b) {
        let _ = writeln!(out, "{d}");
    }
    out
}

/// Parameter count at the natural scale (relative dimension 2 = embedding
/// width) and the scale found by the binary search.
pub fn genome_params(genome: &Genome, model: &ModelConfig) -> Result<String, ExperimentError> {
    let domain = |e: crate::arch::ArchError| ExperimentError::Domain(e.to_string());
    let sigma = natural_scale(model);
    let natural = at_scale(genome, model, sigma).map_err(domain)?;
    let mut out = String::new();
    let _ = writeln!(out, "embedding_dim\t{}", model.input_embedding_dim);
    let _ = writeln!(out, "vocab_size\t{}", model.vocab_size);
    let _ = writeln!(out, "natural_scale\t{sigma}");
    let _ = writeln!(out, "natural_total_params\t{}", natural.total_params);
    let _ = writeln!(out, "param_range\t[{}, {}]", model.min_params(), model.max_params());
    match scale_dimensions(genome, model) {
        Ok(arch) => {
            let _ = writeln!(out, "scale_factor\t{}", arch.scale_factor);
            let _ = writeln!(out, "total_params\t{}", arch.total_params);
            let _ = writeln!(out, "embedding_params\t{}", arch.embedding_params);
            let _ = writeln!(out, "encoder_params_per_cell\t{}", arch.encoder_dims.params_per_repeat);
            let _ = writeln!(out, "decoder_params_per_cell\t{}", arch.decoder_dims.params_per_repeat);
        }
        Err(e) => {
            let _ = writeln!(out, "scale_factor\tnone ({e})");
        }
    }
    Ok(out)
}

pub fn genome_compose(genome: &Genome, model: &ModelConfig) -> Result<String, ExperimentError> {
    let arch = scale_dimensions(genome, model).map_err(|e| ExperimentError::Domain(e.to_string()))?;
    Ok(graph_report(&arch))
}
