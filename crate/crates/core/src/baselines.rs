//! Comparison policies: pure robust exploitation (`nom`) and
//! exploration-variance inflation matched to a cost target (`greedy`).

use nalgebra::DMatrix;

use crate::conic::SolveOptions;
use crate::error::{Error, Result};
use crate::estimation::UncertainModel;
use crate::scalar::{real, Scalar};
use crate::simulation::{CostSpec, Policy};
use crate::synthesis::{evaluate_wc_cost, synthesize_robust, CovarianceBlock, SynthesisResult};

/// Relative tolerance for the greedy cost-matching bisection.
pub const GREEDY_REL_TOL: f64 = 1e-3;
/// Largest exploration scale the bisection will consider.
pub const ALPHA_MAX: f64 = 1e3;
const MAX_BISECT_ITERS: usize = 100;

/// Pure robust exploitation: the synthesis policy with its (already
/// negligible) exploration covariance truncated to exactly zero.
pub fn nom_policy<T: Scalar>(
    model: &UncertainModel<T>,
    cost: &CostSpec<T>,
    sigma_w: T,
    opts: &SolveOptions<T>,
) -> Result<SynthesisResult<T>> {
    let mut res = synthesize_robust(model, cost, sigma_w, opts)?;
    let trace = res.policy.exploration_cov().trace();
    if trace >= real::<T>(1e-4) {
        return Err(Error::NumericalTrouble(format!(
            "exploitation synthesis returned exploration trace {:.3e}",
            crate::scalar::to_f64(trace)
        )));
    }
    res.policy = Policy::pure_gain(res.policy.gain().clone());
    Ok(res)
}

/// A greedy-exploration policy: the `nom` gain with isotropic exploration
/// Σ = α²·I inflated until the worst-case cost meets `target_wc_cost`.
#[derive(Debug, Clone)]
pub struct GreedyPolicy<T: Scalar> {
    pub policy: Policy<T>,
    /// Exploration scale actually used.
    pub alpha: T,
    /// Worst-case cost at the returned policy.
    pub achieved_wc_cost: T,
    /// Stationary covariance block of the returned policy.
    pub xi: CovarianceBlock<T>,
    /// Set when the bisection hit `ALPHA_MAX` without reaching the target.
    pub saturated: bool,
}

/// Inflate exploration until the worst-case cost matches `target_wc_cost`
/// within [`GREEDY_REL_TOL`] relative. Targets at or below the exploitation
/// cost give α = 0.
pub fn greedy_policy<T: Scalar>(
    model: &UncertainModel<T>,
    cost: &CostSpec<T>,
    sigma_w: T,
    target_wc_cost: T,
    opts: &SolveOptions<T>,
) -> Result<GreedyPolicy<T>> {
    let nom = nom_policy(model, cost, sigma_w, opts)?;
    let k = nom.policy.gain().clone();
    let n_u = k.nrows();
    let rel_tol = real::<T>(GREEDY_REL_TOL);
    let alpha_max = real::<T>(ALPHA_MAX);

    if target_wc_cost <= nom.wc_cost * (T::one() + rel_tol) {
        return Ok(GreedyPolicy {
            policy: nom.policy,
            alpha: T::zero(),
            achieved_wc_cost: nom.wc_cost,
            xi: nom.xi,
            saturated: false,
        });
    }

    // worst-case cost at exploration scale α; infeasible evaluations count
    // as above any target
    let eval_at = |alpha: T| -> Result<Option<(T, CovarianceBlock<T>)>> {
        let policy = Policy::new(k.clone(), DMatrix::identity(n_u, n_u) * (alpha * alpha))?;
        match evaluate_wc_cost(&policy, model, cost, sigma_w, opts) {
            Ok(eval) => Ok(Some((eval.wc_cost, eval.xi))),
            Err(Error::PolicyNotRobustlyStabilizing) | Err(Error::NumericalTrouble(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };

    // expand to bracket the target
    let mut lo = T::zero();
    let mut lo_val = (nom.wc_cost, nom.xi.clone());
    let mut hi = T::one();
    loop {
        match eval_at(hi)? {
            Some((c, xi)) if c < target_wc_cost => {
                lo = hi;
                lo_val = (c, xi);
                hi *= real::<T>(2.0);
            }
            _ => break,
        }
        if hi > alpha_max {
            let (c, xi) = lo_val;
            let policy = Policy::new(k, DMatrix::identity(n_u, n_u) * (lo * lo))?;
            return Ok(GreedyPolicy {
                policy,
                alpha: lo,
                achieved_wc_cost: c,
                xi,
                saturated: true,
            });
        }
    }

    // bisect until the cost matches the target
    for _ in 0..MAX_BISECT_ITERS {
        let mid = (lo + hi) * real::<T>(0.5);
        match eval_at(mid)? {
            None => hi = mid,
            Some((c, xi)) => {
                if (c - target_wc_cost).abs() <= rel_tol * target_wc_cost {
                    let policy = Policy::new(k, DMatrix::identity(n_u, n_u) * (mid * mid))?;
                    return Ok(GreedyPolicy {
                        policy,
                        alpha: mid,
                        achieved_wc_cost: c,
                        xi,
                        saturated: false,
                    });
                }
                if c < target_wc_cost {
                    lo = mid;
                    lo_val = (c, xi);
                } else {
                    hi = mid;
                }
            }
        }
    }

    // interval exhausted without meeting the tolerance; return the feasible
    // side, which never overshoots the target
    let (c, xi) = lo_val;
    let policy = Policy::new(k, DMatrix::identity(n_u, n_u) * (lo * lo))?;
    Ok(GreedyPolicy {
        policy,
        alpha: lo,
        achieved_wc_cost: c,
        xi,
        saturated: false,
    })
}
