//! Experiment configuration: JSON schema, validation with field-path
//! errors, and conversion into the runtime types.

use std::path::Path;

use nalgebra::DMatrix;
use serde_json::Value;

use crate::conic::SolveOptions;
use crate::error::{Error, Result};
use crate::rrl::{Planner, RrlConfig};
use crate::simulation::{CostSpec, EpochSchedule, LinearSystem};

use super::Mode;

/// How the initial identification dataset is produced: open-loop bursts
/// driven by zero-mean Gaussian inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDataProtocol {
    pub rollouts: usize,
    pub steps: usize,
    /// Input covariance; identity when omitted in the config.
    pub input_cov: Option<DMatrix<f64>>,
}

impl InitialDataProtocol {
    pub fn input_cov_matrix(&self, n_u: usize) -> Result<DMatrix<f64>> {
        match &self.input_cov {
            Some(m) => {
                if m.nrows() != n_u || m.ncols() != n_u {
                    return Err(Error::config(
                        "initial_data.input_cov",
                        format!("must be {n_u}x{n_u}"),
                    ));
                }
                Ok(m.clone())
            }
            None => Ok(DMatrix::identity(n_u, n_u)),
        }
    }
}

/// Validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma_w: f64,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub schedule: EpochSchedule,
    pub delta: f64,
    pub horizon: usize,
    pub initial_data: InitialDataProtocol,
    pub trials: u64,
    pub seed: u64,
    pub methods: Vec<Planner>,
    pub modes: Vec<Mode>,
    pub jobs: Option<usize>,
    pub feas_tol: f64,
    pub opt_tol: f64,
}

impl ExperimentConfig {
    pub fn system(&self) -> Result<LinearSystem<f64>> {
        LinearSystem::new(self.a.clone(), self.b.clone(), self.sigma_w)
    }

    pub fn cost(&self) -> Result<CostSpec<f64>> {
        CostSpec::new(self.q.clone(), self.r.clone())
    }

    pub fn solve_opts(&self) -> SolveOptions<f64> {
        SolveOptions {
            feas_tol: self.feas_tol,
            opt_tol: self.opt_tol,
            ..SolveOptions::default()
        }
    }

    pub fn rrl_config(&self) -> Result<RrlConfig<f64>> {
        Ok(RrlConfig {
            schedule: self.schedule.clone(),
            horizon: self.horizon,
            delta: self.delta,
            cost: self.cost()?,
            sigma_w: self.sigma_w,
            solve_opts: self.solve_opts(),
        })
    }

    pub fn all_modes() -> Vec<Mode> {
        vec![Mode::Empirical, Mode::WcData, Mode::WcTheoretical]
    }
}

fn field<'v>(obj: &'v Value, path: &str, name: &str) -> Result<&'v Value> {
    obj.get(name)
        .ok_or_else(|| Error::config(join(path, name), "missing required field"))
}

fn join(path: &str, name: &str) -> String {
    if path.is_empty() {
        name.to_string()
    } else {
        format!("{path}.{name}")
    }
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::config(path, "expected a number"))
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| Error::config(path, "expected a nonnegative integer"))
}

fn as_matrix(v: &Value, path: &str) -> Result<DMatrix<f64>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::config(path, "expected an array of rows"))?;
    if rows.is_empty() {
        return Err(Error::config(path, "matrix has no rows"));
    }
    let mut data: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let cols = row
            .as_array()
            .ok_or_else(|| Error::config(format!("{path}[{i}]"), "expected an array"))?;
        let parsed: Vec<f64> = cols
            .iter()
            .enumerate()
            .map(|(j, c)| as_f64(c, &format!("{path}[{i}][{j}]")))
            .collect::<Result<_>>()?;
        if i > 0 && parsed.len() != data[0].len() {
            return Err(Error::config(path, "rows have inconsistent lengths"));
        }
        data.push(parsed);
    }
    let nrows = data.len();
    let ncols = data[0].len();
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| data[i][j]))
}

/// Parse and validate a configuration from JSON text.
///
/// Defaults: δ = 0.05, h = 10, trials = 1, seed = 0, all methods, all
/// modes, solver tolerances 1e-7. The environment variable
/// `RRL_SOLVER_TOL` overrides both solver tolerances when set.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::config("<root>", format!("invalid JSON: {e}")))?;

    let system = field(&root, "", "system")?;
    let a = as_matrix(field(system, "system", "A")?, "system.A")?;
    let b = as_matrix(field(system, "system", "B")?, "system.B")?;
    let sigma_w = as_f64(field(system, "system", "sigma_w")?, "system.sigma_w")?;
    if !a.is_square() {
        return Err(Error::config("system.A", "must be square"));
    }
    if b.nrows() != a.nrows() {
        return Err(Error::config("system.B", "row count must match system.A"));
    }
    if sigma_w < 0.0 {
        return Err(Error::config("system.sigma_w", "must be nonnegative"));
    }

    let cost = field(&root, "", "cost")?;
    let q = as_matrix(field(cost, "cost", "Q")?, "cost.Q")?;
    let r = as_matrix(field(cost, "cost", "R")?, "cost.R")?;
    if q.nrows() != a.nrows() || !q.is_square() {
        return Err(Error::config("cost.Q", "must match the state dimension"));
    }
    if r.nrows() != b.ncols() || !r.is_square() {
        return Err(Error::config("cost.R", "must match the input dimension"));
    }

    let schedule_v = field(&root, "", "schedule")?;
    let schedule = if let Some(bounds) = schedule_v.get("boundaries") {
        let arr = bounds
            .as_array()
            .ok_or_else(|| Error::config("schedule.boundaries", "expected an array"))?;
        let parsed: Vec<usize> = arr
            .iter()
            .enumerate()
            .map(|(i, v)| as_usize(v, &format!("schedule.boundaries[{i}]")))
            .collect::<Result<_>>()?;
        EpochSchedule::new(parsed)
            .map_err(|e| Error::config("schedule.boundaries", e.to_string()))?
    } else {
        let total = as_usize(field(schedule_v, "schedule", "total")?, "schedule.total")?;
        let epochs = as_usize(field(schedule_v, "schedule", "epochs")?, "schedule.epochs")?;
        EpochSchedule::uniform(total, epochs)
            .map_err(|e| Error::config("schedule", e.to_string()))?
    };

    let delta = match root.get("delta") {
        Some(v) => as_f64(v, "delta")?,
        None => 0.05,
    };
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::config("delta", "must lie in (0, 1)"));
    }
    let horizon = match root.get("horizon") {
        Some(v) => as_usize(v, "horizon")?,
        None => 10,
    };

    let init = field(&root, "", "initial_data")?;
    let initial_data = InitialDataProtocol {
        rollouts: as_usize(field(init, "initial_data", "rollouts")?, "initial_data.rollouts")?,
        steps: as_usize(field(init, "initial_data", "steps")?, "initial_data.steps")?,
        input_cov: match init.get("input_cov") {
            Some(v) => Some(as_matrix(v, "initial_data.input_cov")?),
            None => None,
        },
    };
    if initial_data.rollouts == 0 || initial_data.steps == 0 {
        return Err(Error::config(
            "initial_data",
            "rollouts and steps must be positive",
        ));
    }

    let trials = match root.get("trials") {
        Some(v) => as_usize(v, "trials")? as u64,
        None => 1,
    };
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let seed = match root.get("seed") {
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Error::config("seed", "expected a nonnegative integer"))?,
        None => 0,
    };

    let methods = match root.get("methods") {
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::config("methods", "expected an array"))?;
            let parsed: Vec<Planner> = arr
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    m.as_str()
                        .ok_or_else(|| Error::config(format!("methods[{i}]"), "expected a string"))?
                        .parse()
                        .map_err(|e: Error| Error::config(format!("methods[{i}]"), e.to_string()))
                })
                .collect::<Result<_>>()?;
            if parsed.is_empty() {
                return Err(Error::config("methods", "must not be empty"));
            }
            parsed
        }
        None => vec![Planner::Rrl, Planner::Nom, Planner::Greedy],
    };

    let modes = match root.get("modes") {
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::config("modes", "expected an array"))?;
            arr.iter()
                .enumerate()
                .map(|(i, m)| {
                    m.as_str()
                        .ok_or_else(|| Error::config(format!("modes[{i}]"), "expected a string"))?
                        .parse()
                        .map_err(|e: Error| Error::config(format!("modes[{i}]"), e.to_string()))
                })
                .collect::<Result<_>>()?
        }
        None => ExperimentConfig::all_modes(),
    };

    let jobs = match root.get("jobs") {
        Some(v) => Some(as_usize(v, "jobs")?),
        None => None,
    };

    let mut feas_tol = match root.get("feas_tol") {
        Some(v) => as_f64(v, "feas_tol")?,
        None => 1e-7,
    };
    let mut opt_tol = match root.get("opt_tol") {
        Some(v) => as_f64(v, "opt_tol")?,
        None => 1e-7,
    };
    if let Ok(tol) = std::env::var("RRL_SOLVER_TOL") {
        let parsed: f64 = tol
            .parse()
            .map_err(|_| Error::config("RRL_SOLVER_TOL", "expected a number"))?;
        feas_tol = parsed;
        opt_tol = parsed;
    }

    Ok(ExperimentConfig {
        a,
        b,
        sigma_w,
        q,
        r,
        schedule,
        delta,
        horizon,
        initial_data,
        trials,
        seed,
        methods,
        modes,
        jobs,
        feas_tol,
        opt_tol,
    })
}

/// Load and validate a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config(
            path.display().to_string(),
            format!("cannot read config: {e}"),
        )
    })?;
    parse_config(&text)
}
