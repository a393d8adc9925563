//! Receding-horizon robust planner.
//!
//! Propagates expected uncertainty through planned stationary covariances,
//! pre-selects the S-procedure multipliers of future epochs, solves the
//! joint multi-epoch SDP, and applies the resulting policies to a system
//! epoch by epoch, refreshing the model from data in between.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{greedy_policy, nom_policy};
use crate::conic::{AffineMat, ConicProgram, MatVar, ScalarVar, SolveOptions, SolveStatus};
use crate::error::{Error, Result};
use crate::estimation::{information, spectral_model, Dataset, UncertainModel};
use crate::linalg::{blkdiag, min_eig};
use crate::rng::NoiseStreams;
use crate::scalar::{real, to_f64, Scalar};
use crate::simulation::{empirical_cost, rollout, CostSpec, EpochSchedule, LinearSystem, Policy};
use crate::synthesis::{
    evaluate_wc_cost, s_lmi_affine, synthesize_robust, CovarianceBlock, SynthesisResult,
};

/// Planner configuration shared by every epoch of a trial.
#[derive(Debug, Clone)]
pub struct RrlConfig<T: Scalar> {
    pub schedule: EpochSchedule,
    /// Look-ahead horizon h (number of epochs planned beyond the current
    /// one); h = 0 degenerates to pure exploitation.
    pub horizon: usize,
    pub delta: T,
    pub cost: CostSpec<T>,
    pub sigma_w: T,
    pub solve_opts: SolveOptions<T>,
}

/// Model with a predicted uncertainty matrix in place of the data-driven one.
#[derive(Debug, Clone)]
pub struct PropagatedModel<T: Scalar> {
    pub base: UncertainModel<T>,
    pub dtilde: DMatrix<T>,
}

impl<T: Scalar> PropagatedModel<T> {
    /// Predicted data only adds information: D̃ ⪰ D up to tolerance.
    pub fn new(base: UncertainModel<T>, dtilde: DMatrix<T>) -> Result<Self> {
        let gap = min_eig(&(&dtilde - &base.d));
        if gap < -real::<T>(1e-9) {
            return Err(Error::InvalidCovariance {
                what: "propagated uncertainty decrement".into(),
                min_eig: to_f64(gap),
            });
        }
        Ok(PropagatedModel { base, dtilde })
    }

    /// The model carrying the propagated uncertainty.
    pub fn model(&self) -> Result<UncertainModel<T>> {
        self.base.with_d(self.dtilde.clone())
    }
}

/// Predicted uncertainty after deploying the given stationary blocks:
/// D̃ = D + Σ_k T_k · Ξ_k / (σ_w² c_δ).
pub fn propagate_d<T: Scalar>(
    d: &DMatrix<T>,
    xis: &[CovarianceBlock<T>],
    durations: &[usize],
    sigma_w: T,
    c_delta: T,
) -> Result<DMatrix<T>> {
    if xis.len() != durations.len() {
        return Err(Error::dim(format!(
            "{} covariance blocks but {} durations",
            xis.len(),
            durations.len()
        )));
    }
    let mut out = d.clone();
    let scale = T::one() / (sigma_w * sigma_w * c_delta);
    for (xi, &t) in xis.iter().zip(durations) {
        let full = xi.assemble();
        if full.nrows() != d.nrows() {
            return Err(Error::dim("covariance block does not match D".to_string()));
        }
        out += full * (scale * real::<T>(t as f64));
    }
    Ok(out)
}

/// Duration of epoch `j`, extending past the end of the schedule by
/// repeating the final epoch length (the look-ahead window may run beyond
/// the horizon).
fn duration_extended(schedule: &EpochSchedule, epoch: usize) -> usize {
    schedule.duration(epoch.min(schedule.num_epochs()))
}

/// Multipliers for the future-epoch constraints of the joint SDP.
///
/// The exploitation policy is synthesized once; its stationary block is
/// propagated forward to predict each future epoch's uncertainty, and the
/// multiplier of each epoch is read off an independent fixed-policy
/// evaluation against that predicted model.
pub fn select_multipliers<T: Scalar>(
    model: &UncertainModel<T>,
    config: &RrlConfig<T>,
    epoch: usize,
) -> Result<Vec<T>> {
    let wrap = |e: Error, at: usize| Error::MultiplierSelectionFailed {
        epoch: at,
        source: Box::new(e),
    };
    let synth =
        synthesize_robust(model, &config.cost, config.sigma_w, &config.solve_opts)
            .map_err(|e| wrap(e, epoch))?;
    let mut lambdas = Vec::with_capacity(config.horizon + 1);
    for k in 0..=config.horizon {
        let model_k = if k == 0 {
            model.clone()
        } else {
            let xis = vec![synth.xi.clone(); k];
            let durations: Vec<usize> = (0..k)
                .map(|j| duration_extended(&config.schedule, epoch + j))
                .collect();
            let dtilde = propagate_d(&model.d, &xis, &durations, config.sigma_w, model.c_delta)?;
            PropagatedModel::new(model.clone(), dtilde)?.model()?
        };
        let eval = evaluate_wc_cost(
            &synth.policy,
            &model_k,
            &config.cost,
            config.sigma_w,
            &config.solve_opts,
        )
        .map_err(|e| wrap(e, epoch + k))?;
        lambdas.push(eval.lambda);
    }
    Ok(lambdas)
}

/// One solved plan: h+1 policies with their stationary blocks and
/// multipliers, and the duration-weighted planned cost.
#[derive(Debug, Clone)]
pub struct EpochPlan<T: Scalar> {
    pub policies: Vec<Policy<T>>,
    pub xis: Vec<CovarianceBlock<T>>,
    /// multipliers[0] is solved jointly; the rest were pre-selected.
    pub multipliers: Vec<T>,
    pub planned_cost: T,
}

/// The joint program together with its variable handles, exposed for
/// structural inspection (dimensions, affinity, debug dumps).
pub struct RrlProgram<T: Scalar> {
    pub program: ConicProgram<T>,
    pub xi_vars: Vec<MatVar>,
    pub lambda0: ScalarVar,
}

/// Assemble the joint receding-horizon SDP at `epoch` with the given
/// fixed future multipliers (`multipliers[0]` is ignored; the current
/// epoch's multiplier stays a free variable).
pub fn rrl_program<T: Scalar>(
    model: &UncertainModel<T>,
    config: &RrlConfig<T>,
    epoch: usize,
    multipliers: &[T],
) -> Result<RrlProgram<T>> {
    let h = config.horizon;
    if multipliers.len() != h + 1 {
        return Err(Error::dim(format!(
            "expected {} multipliers, got {}",
            h + 1,
            multipliers.len()
        )));
    }
    if multipliers[1..].iter().any(|l| *l < T::zero()) {
        return Err(Error::dim("multipliers must be nonnegative".to_string()));
    }
    let n_x = model.state_dim();
    let n_u = model.input_dim();
    let eye_x = DMatrix::<T>::identity(n_x, n_x);
    let qbar = blkdiag(config.cost.q(), config.cost.r());
    let info_scale = T::one() / (config.sigma_w * config.sigma_w * model.c_delta);

    let mut prog = ConicProgram::<T>::new();
    let xi_vars: Vec<MatVar> = (0..=h)
        .map(|j| prog.add_matrix_var(&format!("Xi_{j}"), n_x + n_u, true))
        .collect();
    let lambda0 = prog.add_scalar_var("lambda_0", true);

    let xi_affs: Vec<AffineMat<T>> = xi_vars.iter().map(|v| prog.mat_as_affine(*v)).collect();

    let mut objective = crate::conic::ScalarExpr::zero();
    for (j, v) in xi_vars.iter().enumerate() {
        let t_j = real::<T>(duration_extended(&config.schedule, epoch + j) as f64);
        objective = objective + prog.trace_prod(&qbar, *v).scaled(t_j);
    }
    prog.set_objective(objective);

    // current epoch: free multiplier against the data-driven D
    let lam0_expr = prog.scalar_expr(lambda0);
    let s0 = s_lmi_affine(
        &xi_affs[0],
        &AffineMat::const_times_expr(&eye_x, &lam0_expr),
        &AffineMat::const_times_expr(&model.d, &lam0_expr),
        &model.a_hat,
        &model.b_hat,
        config.sigma_w,
    );
    prog.add_lmi("S_0", s0)?;

    // future epochs: fixed multiplier, uncertainty propagated through the
    // planned blocks of the epochs in between (current epoch included)
    for j in 1..=h {
        let lam_j = multipliers[j];
        let mut d_aff = AffineMat::from_const(&model.d);
        for k in 0..j {
            let t_k = real::<T>(duration_extended(&config.schedule, epoch + k) as f64);
            d_aff = d_aff.add(&xi_affs[k].scaled(t_k * info_scale));
        }
        let s_j = s_lmi_affine(
            &xi_affs[j],
            &AffineMat::from_const(&(&eye_x * lam_j)),
            &d_aff.scaled(lam_j),
            &model.a_hat,
            &model.b_hat,
            config.sigma_w,
        );
        prog.add_lmi(&format!("S_{j}"), s_j)?;
    }

    Ok(RrlProgram {
        program: prog,
        xi_vars,
        lambda0,
    })
}

/// Solve the joint receding-horizon SDP and recover the planned policies.
pub fn solve_rrl<T: Scalar>(
    model: &UncertainModel<T>,
    config: &RrlConfig<T>,
    epoch: usize,
    multipliers: &[T],
) -> Result<EpochPlan<T>> {
    let built = rrl_program(model, config, epoch, multipliers)?;
    let sol = built.program.solve(&config.solve_opts)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::NoRobustlyStabilizingPolicy),
        SolveStatus::NumericalTrouble => {
            return Err(Error::NumericalTrouble(
                "joint receding-horizon SDP did not converge".to_string(),
            ))
        }
    }

    let n_x = model.state_dim();
    let n_u = model.input_dim();
    let mut policies = Vec::with_capacity(config.horizon + 1);
    let mut xis = Vec::with_capacity(config.horizon + 1);
    for v in &built.xi_vars {
        let xi_val = built
            .program
            .matrix_value(&sol, *v)
            .expect("optimal solution has Xi");
        let block = CovarianceBlock::from_xi(&xi_val, n_x, n_u)?;
        policies.push(block.recover_policy()?);
        xis.push(block);
    }
    let mut out_multipliers = multipliers.to_vec();
    out_multipliers[0] = built
        .program
        .scalar_value(&sol, built.lambda0)
        .expect("optimal solution has lambda_0");

    Ok(EpochPlan {
        policies,
        xis,
        multipliers: out_multipliers,
        planned_cost: sol.objective_value.expect("optimal solution has objective"),
    })
}

/// Which planner drives a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Planner {
    Rrl,
    Nom,
    Greedy,
}

impl Planner {
    pub fn as_str(&self) -> &'static str {
        match self {
            Planner::Rrl => "rrl",
            Planner::Nom => "nom",
            Planner::Greedy => "greedy",
        }
    }
}

impl std::fmt::Display for Planner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Planner {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rrl" => Ok(Planner::Rrl),
            "nom" => Ok(Planner::Nom),
            "greedy" => Ok(Planner::Greedy),
            other => Err(Error::config("method", format!("unknown method `{other}`"))),
        }
    }
}

/// Dense row-major dump of a matrix for serialization.
pub fn matrix_rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| to_f64(m[(i, j)])).collect())
        .collect()
}

/// A deployed policy in serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDump {
    pub k: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
}

/// Echo of the trial configuration, written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub boundaries: Vec<usize>,
    pub horizon: usize,
    pub delta: f64,
    pub sigma_w: f64,
    pub feas_tol: f64,
    pub opt_tol: f64,
}

/// Everything recorded about one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub planner: String,
    pub master_seed: u64,
    pub trial_index: u64,
    pub epochs: usize,
    /// Realized cost per epoch (sum over the epoch's steps).
    pub empirical_cost: Vec<f64>,
    /// T_i × worst-case cost of the deployed policy against the
    /// data-driven model; absent when the evaluation was infeasible.
    pub wc_cost_data: Vec<Option<f64>>,
    /// Same, against the theoretically-propagated uncertainty.
    pub wc_cost_theoretical: Vec<Option<f64>>,
    /// λ_min(D) of the data-driven model at each epoch start.
    pub information: Vec<f64>,
    pub policies: Vec<PolicyDump>,
    /// Epochs where planning failed and the exploitation policy was
    /// deployed instead.
    pub fallback_epochs: Vec<usize>,
    pub notes: Vec<String>,
    pub config: ConfigEcho,
}

impl TrialResult {
    pub fn total_empirical_cost(&self) -> f64 {
        self.empirical_cost.iter().sum()
    }
}

fn config_echo<T: Scalar>(config: &RrlConfig<T>) -> ConfigEcho {
    ConfigEcho {
        boundaries: config.schedule.boundaries().to_vec(),
        horizon: config.horizon,
        delta: to_f64(config.delta),
        sigma_w: to_f64(config.sigma_w),
        feas_tol: to_f64(config.solve_opts.feas_tol),
        opt_tol: to_f64(config.solve_opts.opt_tol),
    }
}

struct EpochDecision<T: Scalar> {
    deployed: Policy<T>,
    planned_xi: CovarianceBlock<T>,
    fallback: bool,
    notes: Vec<String>,
}

fn plan_epoch<T: Scalar>(
    planner: Planner,
    model: &UncertainModel<T>,
    config: &RrlConfig<T>,
    epoch: usize,
) -> Result<EpochDecision<T>> {
    let mut notes = Vec::new();
    let nom_fallback = |notes: &mut Vec<String>, err: Error| -> Result<EpochDecision<T>> {
        notes.push(format!("epoch {epoch}: planning failed ({err}); deploying nom policy"));
        let nom = nom_policy(model, &config.cost, config.sigma_w, &config.solve_opts)?;
        Ok(EpochDecision {
            deployed: nom.policy,
            planned_xi: nom.xi,
            fallback: true,
            notes: std::mem::take(notes),
        })
    };

    match planner {
        Planner::Nom => {
            let nom = nom_policy(model, &config.cost, config.sigma_w, &config.solve_opts)?;
            Ok(EpochDecision {
                deployed: nom.policy,
                planned_xi: nom.xi,
                fallback: false,
                notes,
            })
        }
        Planner::Rrl => {
            let plan = select_multipliers(model, config, epoch)
                .and_then(|lams| solve_rrl(model, config, epoch, &lams));
            match plan {
                Ok(plan) => Ok(EpochDecision {
                    deployed: plan.policies[0].clone(),
                    planned_xi: plan.xis[0].clone(),
                    fallback: false,
                    notes,
                }),
                Err(err) => nom_fallback(&mut notes, err),
            }
        }
        Planner::Greedy => {
            // match the worst-case cost the joint planner would incur at
            // this epoch
            let qbar = blkdiag(config.cost.q(), config.cost.r());
            let nom = nom_policy(model, &config.cost, config.sigma_w, &config.solve_opts)?;
            let target = select_multipliers(model, config, epoch)
                .and_then(|lams| solve_rrl(model, config, epoch, &lams))
                .map(|plan| (&qbar * plan.xis[0].assemble()).trace());
            let target = match target {
                Ok(t) => t,
                Err(err) => {
                    notes.push(format!(
                        "epoch {epoch}: reference plan failed ({err}); greedy target set to exploitation cost"
                    ));
                    nom.wc_cost
                }
            };
            let greedy = greedy_policy(
                model,
                &config.cost,
                config.sigma_w,
                target,
                &config.solve_opts,
            )?;
            if greedy.saturated {
                notes.push(format!(
                    "epoch {epoch}: greedy bisection saturated at alpha = {}",
                    to_f64(greedy.alpha)
                ));
            }
            Ok(EpochDecision {
                deployed: greedy.policy,
                planned_xi: greedy.xi,
                fallback: false,
                notes,
            })
        }
    }
}

/// Run one full receding-horizon trial against `true_sys`.
///
/// For each epoch the model is refreshed from all data gathered so far, the
/// planner picks a policy, the policy runs on the continuing system state
/// (never reset between epochs), and the new transitions join the dataset.
/// Planning failures fall back to the exploitation policy and are logged;
/// estimation or simulation failures abort the trial.
pub fn receding_horizon_run<T: Scalar>(
    true_sys: &LinearSystem<T>,
    initial_data: &Dataset<T>,
    config: &RrlConfig<T>,
    streams: &mut NoiseStreams,
    planner: Planner,
    master_seed: u64,
    trial_index: u64,
) -> Result<TrialResult> {
    let n = config.schedule.num_epochs();
    let mut data = initial_data.clone();
    let mut x = DVector::<T>::zeros(true_sys.state_dim());
    let mut d_theo: Option<DMatrix<T>> = None;

    let mut result = TrialResult {
        planner: planner.as_str().to_string(),
        master_seed,
        trial_index,
        epochs: n,
        empirical_cost: Vec::with_capacity(n),
        wc_cost_data: Vec::with_capacity(n),
        wc_cost_theoretical: Vec::with_capacity(n),
        information: Vec::with_capacity(n),
        policies: Vec::with_capacity(n),
        fallback_epochs: Vec::new(),
        notes: Vec::new(),
        config: config_echo(config),
    };

    for epoch in 1..=n {
        let duration = config.schedule.duration(epoch);
        let t_i = real::<T>(duration as f64);
        let model = spectral_model(&data, config.sigma_w, config.delta)?;
        result.information.push(to_f64(information(&model)));

        let d_theo_now = d_theo.get_or_insert_with(|| model.d.clone()).clone();
        let model_theo = model.with_d(d_theo_now)?;

        let decision = plan_epoch(planner, &model, config, epoch)?;
        result.notes.extend(decision.notes);
        if decision.fallback {
            result.fallback_epochs.push(epoch);
        }

        let mut record_eval = |m: &UncertainModel<T>, label: &str, notes: &mut Vec<String>| {
            match evaluate_wc_cost(
                &decision.deployed,
                m,
                &config.cost,
                config.sigma_w,
                &config.solve_opts,
            ) {
                Ok(eval) => Some(to_f64(t_i * eval.wc_cost)),
                Err(err) => {
                    notes.push(format!(
                        "epoch {epoch}: {label} worst-case evaluation failed ({err})"
                    ));
                    None
                }
            }
        };
        let wc_data = record_eval(&model, "data", &mut result.notes);
        let wc_theo = record_eval(&model_theo, "theoretical", &mut result.notes);
        result.wc_cost_data.push(wc_data);
        result.wc_cost_theoretical.push(wc_theo);

        let traj = rollout(true_sys, &decision.deployed, &x, duration, streams)?;
        let costs = empirical_cost(&traj, &config.cost)?;
        result.empirical_cost.push(to_f64(costs.total));
        x = traj.states.last().expect("rollout has states").clone();
        data.push_trajectory(&traj);

        result.policies.push(PolicyDump {
            k: matrix_rows(decision.deployed.gain()),
            sigma: matrix_rows(decision.deployed.exploration_cov()),
        });

        d_theo = Some(propagate_d(
            &d_theo.take().expect("theoretical uncertainty initialized"),
            &[decision.planned_xi],
            &[duration],
            config.sigma_w,
            model.c_delta,
        )?);
    }

    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_model(a: f64, b: f64, d_scale: f64) -> UncertainModel<f64> {
        UncertainModel::new(
            DMatrix::from_row_slice(1, 1, &[a]),
            DMatrix::from_row_slice(1, 1, &[b]),
            DMatrix::identity(2, 2) * d_scale,
            0.05,
            5.991,
        )
        .unwrap()
    }

    fn config(h: usize) -> RrlConfig<f64> {
        RrlConfig {
            schedule: EpochSchedule::uniform(50, 5).unwrap(),
            horizon: h,
            delta: 0.05,
            cost: CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap(),
            sigma_w: 0.5,
            solve_opts: SolveOptions::default(),
        }
    }

    fn unit_block(w: f64, y: f64) -> CovarianceBlock<f64> {
        CovarianceBlock::new(
            DMatrix::from_row_slice(1, 1, &[w]),
            DMatrix::zeros(1, 1),
            DMatrix::from_row_slice(1, 1, &[y]),
        )
        .unwrap()
    }

    #[test]
    fn propagate_empty_is_identity() {
        let d = DMatrix::<f64>::identity(2, 2) * 3.0;
        let out = propagate_d(&d, &[], &[], 0.5, 2.0).unwrap();
        assert_eq!(out, d);
    }

    #[test]
    fn propagate_single_epoch_arithmetic() {
        // Ξ = I, T = 100, σ_w = 1, c_δ = 1 adds 100·I
        let d = DMatrix::<f64>::identity(2, 2);
        let xi = unit_block(1.0, 1.0);
        let out = propagate_d(&d, &[xi], &[100], 1.0, 1.0).unwrap();
        assert_relative_eq!(out, DMatrix::identity(2, 2) * 101.0, epsilon = 1e-12);
    }

    #[test]
    fn propagate_is_additive() {
        let d = DMatrix::<f64>::identity(2, 2) * 2.0;
        let x1 = unit_block(1.0, 0.5);
        let x2 = unit_block(2.0, 0.25);
        let joint = propagate_d(&d, &[x1.clone(), x2.clone()], &[10, 20], 0.7, 3.0).unwrap();
        let step1 = propagate_d(&d, &[x1], &[10], 0.7, 3.0).unwrap();
        let step2 = propagate_d(&step1, &[x2], &[20], 0.7, 3.0).unwrap();
        assert_eq!(joint, step2);
    }

    #[test]
    fn propagated_model_rejects_shrinking_uncertainty() {
        let model = scalar_model(0.5, 1.0, 2.0);
        let smaller = DMatrix::identity(2, 2) * 1.0;
        assert!(PropagatedModel::new(model, smaller).is_err());
    }

    #[test]
    fn select_multipliers_h0_matches_direct_evaluation() {
        let model = scalar_model(0.8, 1.0, 40.0);
        let cfg = config(0);
        let lams = select_multipliers(&model, &cfg, 1).unwrap();
        assert_eq!(lams.len(), 1);
        let synth =
            synthesize_robust(&model, &cfg.cost, cfg.sigma_w, &cfg.solve_opts).unwrap();
        let eval =
            evaluate_wc_cost(&synth.policy, &model, &cfg.cost, cfg.sigma_w, &cfg.solve_opts)
                .unwrap();
        assert_relative_eq!(lams[0], eval.lambda, epsilon = 1e-6);
    }

    #[test]
    fn multipliers_finite_nonnegative_and_costs_decrease_in_lookahead() {
        let model = scalar_model(0.8, 1.0, 40.0);
        let cfg = config(4);
        let lams = select_multipliers(&model, &cfg, 1).unwrap();
        assert_eq!(lams.len(), 5);
        assert!(lams.iter().all(|l| l.is_finite() && *l >= 0.0));

        // predicted uncertainty only grows with look-ahead, so the fixed
        // policy's worst-case cost cannot increase
        let synth =
            synthesize_robust(&model, &cfg.cost, cfg.sigma_w, &cfg.solve_opts).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=4usize {
            let durations: Vec<usize> = vec![10; k];
            let xis = vec![synth.xi.clone(); k];
            let dt = propagate_d(&model.d, &xis, &durations, cfg.sigma_w, model.c_delta).unwrap();
            let mk = model.with_d(dt).unwrap();
            let eval =
                evaluate_wc_cost(&synth.policy, &mk, &cfg.cost, cfg.sigma_w, &cfg.solve_opts)
                    .unwrap();
            assert!(
                eval.wc_cost <= prev + 1e-6,
                "cost increased with look-ahead {k}: {} > {prev}",
                eval.wc_cost
            );
            prev = eval.wc_cost;
        }
    }

    #[test]
    fn solve_rrl_h0_matches_synthesis() {
        let model = scalar_model(0.8, 1.0, 40.0);
        let cfg = config(0);
        let lams = select_multipliers(&model, &cfg, 1).unwrap();
        let plan = solve_rrl(&model, &cfg, 1, &lams).unwrap();
        let synth =
            synthesize_robust(&model, &cfg.cost, cfg.sigma_w, &cfg.solve_opts).unwrap();
        // duration-weighted single-epoch objective
        let expected = synth.wc_cost * 10.0;
        let rel = (plan.planned_cost - expected).abs() / expected;
        assert!(rel < 1e-6, "relative mismatch {rel}");
        assert_relative_eq!(
            plan.policies[0].gain()[(0, 0)],
            synth.policy.gain()[(0, 0)],
            epsilon = 1e-4
        );
    }

    #[test]
    fn zero_lookahead_never_explores() {
        // with h = 0 the plan is pure exploitation and the recovered
        // exploration covariance stays at solver-noise level
        let model = scalar_model(0.95, 1.0, 8.0);
        let cfg = RrlConfig {
            schedule: EpochSchedule::uniform(120, 6).unwrap(),
            horizon: 0,
            delta: 0.05,
            cost: CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1) * 0.1).unwrap(),
            sigma_w: 0.5,
            solve_opts: SolveOptions::default(),
        };
        let lams = select_multipliers(&model, &cfg, 1).unwrap();
        let plan = solve_rrl(&model, &cfg, 1, &lams).unwrap();
        assert!(plan.policies[0].exploration_cov().trace() < 1e-4);
    }

    #[test]
    fn joint_plan_improves_on_fixed_policy_plan() {
        // with the same multipliers, freeing the policies can only reduce
        // the planned cost relative to deploying the exploitation policy
        // for every epoch
        let model = scalar_model(0.8, 1.0, 40.0);
        let cfg = config(3);
        let lams = select_multipliers(&model, &cfg, 1).unwrap();
        let plan = solve_rrl(&model, &cfg, 1, &lams).unwrap();

        let synth =
            synthesize_robust(&model, &cfg.cost, cfg.sigma_w, &cfg.solve_opts).unwrap();
        let mut fixed_cost = 0.0;
        for k in 0..=3usize {
            let durations: Vec<usize> = vec![10; k];
            let xis = vec![synth.xi.clone(); k];
            let dt = propagate_d(&model.d, &xis, &durations, cfg.sigma_w, model.c_delta).unwrap();
            let mk = model.with_d(dt).unwrap();
            let eval =
                evaluate_wc_cost(&synth.policy, &mk, &cfg.cost, cfg.sigma_w, &cfg.solve_opts)
                    .unwrap();
            fixed_cost += 10.0 * eval.wc_cost;
        }
        assert!(
            plan.planned_cost <= fixed_cost + 1e-6 * fixed_cost,
            "joint plan {} worse than fixed plan {}",
            plan.planned_cost,
            fixed_cost
        );
    }

    #[test]
    fn planned_cost_matches_trace_form() {
        let model = scalar_model(0.8, 1.0, 40.0);
        let cfg = config(2);
        let lams = select_multipliers(&model, &cfg, 1).unwrap();
        let plan = solve_rrl(&model, &cfg, 1, &lams).unwrap();
        let qbar = blkdiag(cfg.cost.q(), cfg.cost.r());
        let recomputed: f64 = plan
            .xis
            .iter()
            .map(|xi| 10.0 * (&qbar * xi.assemble()).trace())
            .sum();
        let rel = (recomputed - plan.planned_cost).abs() / plan.planned_cost;
        assert!(rel < 1e-6, "trace-form mismatch {rel}");
    }

    #[test]
    fn constraints_are_affine_in_stacked_variables() {
        let model = scalar_model(0.8, 1.0, 40.0);
        let cfg = config(2);
        let lams = select_multipliers(&model, &cfg, 1).unwrap();
        let built = rrl_program(&model, &cfg, 1, &lams).unwrap();
        // with fixed future multipliers, G(x1 + x2) = G(x1) + G(x2) − G(0)
        let m = 3 * 3 + 1; // three 2x2 symmetric blocks plus lambda_0
        let x0 = vec![0.0; m];
        let x1: Vec<f64> = (0..m).map(|i| 0.1 + 0.03 * i as f64).collect();
        let x2: Vec<f64> = (0..m).map(|i| -0.2 + 0.05 * (i % 3) as f64).collect();
        let x12: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
        for idx in 0..built.program.num_lmis() {
            let g0 = built.program.eval_lmi(idx, &x0);
            let g1 = built.program.eval_lmi(idx, &x1);
            let g2 = built.program.eval_lmi(idx, &x2);
            let g12 = built.program.eval_lmi(idx, &x12);
            let resid = (&g12 - (&g1 + &g2 - &g0)).amax();
            assert!(resid < 1e-9, "constraint {idx} non-affine: residual {resid}");
        }
    }
}
