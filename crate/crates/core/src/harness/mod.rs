//! Experiment runner: loads configs, executes seeded Monte Carlo trials
//! across methods, aggregates medians and quartiles, and persists results
//! as per-trial JSON plus one tidy CSV.

mod config;

pub use config::{load_config, parse_config, ExperimentConfig, InitialDataProtocol};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::Dataset;
use crate::rng::NoiseStreams;
use crate::rrl::{receding_horizon_run, Planner, RrlConfig, TrialResult};
use crate::simulation::{rollout, Policy};

/// Evaluation modes reported in the tidy CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Empirical,
    WcData,
    WcTheoretical,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Empirical => "empirical",
            Mode::WcData => "wc_data",
            Mode::WcTheoretical => "wc_theoretical",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Mode::Empirical),
            "wc_data" => Ok(Mode::WcData),
            "wc_theoretical" => Ok(Mode::WcTheoretical),
            other => Err(Error::config("modes", format!("unknown mode `{other}`"))),
        }
    }
}

/// One row of the tidy results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub trial: u64,
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
}

/// Outcome of one trial slot.
#[derive(Debug, Clone)]
pub enum TrialOutcome {
    Completed(TrialResult),
    Failed { reason: String },
}

/// Full experiment output.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub per_method: BTreeMap<String, Vec<TrialOutcome>>,
    pub rows: Vec<ResultRow>,
    pub aggregates: Aggregates,
    pub failed_trials: usize,
    pub total_trials: usize,
}

impl ExperimentResult {
    /// More than 10% of trials failing marks the experiment as degraded.
    pub fn excess_failures(&self) -> bool {
        10 * self.failed_trials > self.total_trials
    }
}

/// Median and quartiles of a metric, per epoch and in total.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateEntry {
    pub method: String,
    pub metric: String,
    /// 1-based epoch, or 0 for the sum over epochs.
    pub epoch: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub type Aggregates = Vec<AggregateEntry>;

/// Generate the initial identification dataset per the configured protocol.
pub fn generate_initial_data(
    config: &ExperimentConfig,
    streams: &mut NoiseStreams,
) -> Result<Dataset<f64>> {
    let sys = config.system()?;
    let protocol = &config.initial_data;
    let policy = Policy::new(
        nalgebra::DMatrix::zeros(sys.input_dim(), sys.state_dim()),
        protocol.input_cov_matrix(sys.input_dim())?,
    )?;
    let mut data = Dataset::new();
    for _ in 0..protocol.rollouts {
        let traj = rollout(
            &sys,
            &policy,
            &DVector::zeros(sys.state_dim()),
            protocol.steps,
            streams,
        )?;
        data.push_trajectory(&traj);
    }
    Ok(data)
}

/// Run a single trial of one method.
pub fn run_trial(config: &ExperimentConfig, method: Planner, trial: u64) -> Result<TrialResult> {
    let sys = config.system()?;
    let rrl_config: RrlConfig<f64> = config.rrl_config()?;
    let mut streams = NoiseStreams::from_master(config.seed, trial);
    let data = generate_initial_data(config, &mut streams)?;
    receding_horizon_run(
        &sys,
        &data,
        &rrl_config,
        &mut streams,
        method,
        config.seed,
        trial,
    )
}

fn trial_rows(modes: &[Mode], method: Planner, result: &TrialResult) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    let mut push = |trial: u64, epoch: usize, metric: &str, value: Option<f64>| {
        if let Some(value) = value {
            rows.push(ResultRow {
                method: method.as_str().to_string(),
                trial,
                epoch,
                metric: metric.to_string(),
                value,
            });
        }
    };
    if modes.contains(&Mode::Empirical) {
        for (e, &v) in result.empirical_cost.iter().enumerate() {
            push(result.trial_index, e + 1, "empirical", Some(v));
        }
    }
    if modes.contains(&Mode::WcData) {
        for (e, v) in result.wc_cost_data.iter().enumerate() {
            push(result.trial_index, e + 1, "wc_data", *v);
        }
    }
    if modes.contains(&Mode::WcTheoretical) {
        for (e, v) in result.wc_cost_theoretical.iter().enumerate() {
            push(result.trial_index, e + 1, "wc_theoretical", *v);
        }
    }
    for (e, &v) in result.information.iter().enumerate() {
        push(result.trial_index, e + 1, "information", Some(v));
    }
    rows
}

/// Execute every (method, trial) slot, write per-trial JSON files and the
/// tidy CSV under `out_dir`, and aggregate.
///
/// Individual trial failures are recorded and skipped; the experiment
/// carries on. Output bytes depend only on the config (trials run in
/// parallel, writes happen after a join in a fixed order).
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentResult> {
    fs::create_dir_all(out_dir)?;
    let slots: Vec<(Planner, u64)> = config
        .methods
        .iter()
        .flat_map(|m| (0..config.trials).map(move |t| (*m, t)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::NumericalTrouble(format!("thread pool: {e}")))?;
    let outcomes: Vec<(Planner, u64, TrialOutcome)> = pool.install(|| {
        slots
            .par_iter()
            .map(|(method, trial)| {
                let outcome = match run_trial(config, *method, *trial) {
                    Ok(res) => TrialOutcome::Completed(res),
                    Err(e) => TrialOutcome::Failed {
                        reason: e.to_string(),
                    },
                };
                (*method, *trial, outcome)
            })
            .collect()
    });

    let mut per_method: BTreeMap<String, Vec<TrialOutcome>> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut failed = 0usize;
    for method in &config.methods {
        for (m, trial, outcome) in &outcomes {
            if m != method {
                continue;
            }
            match outcome {
                TrialOutcome::Completed(res) => {
                    let path = out_dir.join(format!("trial_{}_{trial:04}.json", method.as_str()));
                    fs::write(&path, serde_json::to_string_pretty(res)?)?;
                    rows.extend(trial_rows(&config.modes, *method, res));
                }
                TrialOutcome::Failed { reason } => {
                    failed += 1;
                    let path = out_dir.join(format!("trial_{}_{trial:04}.failed", method.as_str()));
                    fs::write(&path, reason)?;
                }
            }
            per_method
                .entry(method.as_str().to_string())
                .or_default()
                .push(outcome.clone());
        }
    }

    write_rows_csv(&rows, &out_dir.join("results.csv"))?;
    let aggregates = aggregate_rows(&rows);
    write_aggregates_csv(&aggregates, &out_dir.join("aggregates.csv"))?;

    Ok(ExperimentResult {
        per_method,
        rows,
        aggregates,
        failed_trials: failed,
        total_trials: slots.len(),
    })
}

/// Write the tidy CSV: `method,trial,epoch,metric,value`.
pub fn write_rows_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "method,trial,epoch,metric,value")?;
    for r in rows {
        writeln!(f, "{},{},{},{},{}", r.method, r.trial, r.epoch, r.metric, r.value)?;
    }
    Ok(())
}

/// Parse a tidy results CSV written by [`write_rows_csv`].
pub fn read_rows_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "method,trial,epoch,metric,value" {
                return Err(Error::DatasetParse {
                    line: 1,
                    message: format!("unexpected results header `{line}`"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::DatasetParse {
                line: i + 1,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse_err = |what: &str| Error::DatasetParse {
            line: i + 1,
            message: format!("bad {what}"),
        };
        rows.push(ResultRow {
            method: fields[0].to_string(),
            trial: fields[1].parse().map_err(|_| parse_err("trial"))?,
            epoch: fields[2].parse().map_err(|_| parse_err("epoch"))?,
            metric: fields[3].to_string(),
            value: fields[4].parse().map_err(|_| parse_err("value"))?,
        });
    }
    Ok(rows)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Aggregate tidy rows into per-epoch and total medians/quartiles.
///
/// Epoch 0 in the output carries the per-trial totals (sum over epochs).
pub fn aggregate_rows(rows: &[ResultRow]) -> Aggregates {
    // (method, metric) -> epoch -> trial -> value
    let mut grouped: BTreeMap<(String, String), BTreeMap<usize, BTreeMap<u64, f64>>> =
        BTreeMap::new();
    for r in rows {
        grouped
            .entry((r.method.clone(), r.metric.clone()))
            .or_default()
            .entry(r.epoch)
            .or_default()
            .insert(r.trial, r.value);
    }
    let mut out = Vec::new();
    for ((method, metric), epochs) in &grouped {
        let mut totals: BTreeMap<u64, f64> = BTreeMap::new();
        for (epoch, trials) in epochs {
            let mut vals: Vec<f64> = trials.values().cloned().collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.push(AggregateEntry {
                method: method.clone(),
                metric: metric.clone(),
                epoch: *epoch,
                median: quantile(&vals, 0.5),
                q25: quantile(&vals, 0.25),
                q75: quantile(&vals, 0.75),
            });
            for (t, v) in trials {
                *totals.entry(*t).or_insert(0.0) += v;
            }
        }
        let mut vals: Vec<f64> = totals.values().cloned().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(AggregateEntry {
            method: method.clone(),
            metric: metric.clone(),
            epoch: 0,
            median: quantile(&vals, 0.5),
            q25: quantile(&vals, 0.25),
            q75: quantile(&vals, 0.75),
        });
    }
    out
}

/// Write aggregates as CSV: `method,metric,epoch,median,q25,q75` with
/// epoch 0 holding the totals.
pub fn write_aggregates_csv(aggregates: &Aggregates, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "method,metric,epoch,median,q25,q75")?;
    for a in aggregates {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            a.method, a.metric, a.epoch, a.median, a.q25, a.q75
        )?;
    }
    Ok(())
}

/// Load every per-trial JSON in a directory (the `rrl aggregate` input).
pub fn load_trial_results(dir: &Path) -> Result<Vec<(Planner, TrialResult)>> {
    let mut results = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir)?
        .collect::<std::result::Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("trial_") && n.ends_with(".json"))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    for path in entries {
        let text = fs::read_to_string(&path)?;
        let trial: TrialResult = serde_json::from_str(&text)?;
        let planner: Planner = trial.planner.parse()?;
        results.push((planner, trial));
    }
    Ok(results)
}

/// Rebuild tidy rows from loaded trial results (all modes included).
pub fn rows_from_trials(trials: &[(Planner, TrialResult)]) -> Vec<ResultRow> {
    let all_modes = ExperimentConfig::all_modes();
    let mut rows = Vec::new();
    for (planner, res) in trials {
        rows.extend(trial_rows(&all_modes, *planner, res));
    }
    rows
}
