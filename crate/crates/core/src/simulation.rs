//! Exact simulation of a linear time-invariant system under static-gain
//! exploratory policies, epoch bookkeeping and empirical cost accounting.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{min_eig, psd_sqrt, symmetrize};
use crate::rng::{standard_normal_vector, NoiseStreams};
use crate::scalar::{real, to_f64, Scalar};

/// Tolerance below which a covariance eigenvalue counts as indefinite rather
/// than solver noise.
pub const PSD_CLAMP_TOL: f64 = 1e-9;

/// Ground-truth or nominal dynamics x' = A x + B u + w with w ~ N(0, σ_w² I).
#[derive(Debug, Clone)]
pub struct LinearSystem<T: Scalar> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    sigma_w: T,
}

impl<T: Scalar> LinearSystem<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, sigma_w: T) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim(format!("A must be square, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::dim(format!(
                "B has {} rows but A is {}x{}",
                b.nrows(),
                a.nrows(),
                a.ncols()
            )));
        }
        if sigma_w < T::zero() {
            return Err(Error::dim("sigma_w must be nonnegative".to_string()));
        }
        Ok(LinearSystem { a, b, sigma_w })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn sigma_w(&self) -> T {
        self.sigma_w
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Static feedback gain plus exploration covariance: u = K x + Σ^{1/2} e.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T: Scalar> {
    k: DMatrix<T>,
    sigma: DMatrix<T>,
}

impl<T: Scalar> Policy<T> {
    pub fn new(k: DMatrix<T>, sigma: DMatrix<T>) -> Result<Self> {
        if sigma.nrows() != k.nrows() || !sigma.is_square() {
            return Err(Error::dim(format!(
                "Sigma must be {}x{}, got {}x{}",
                k.nrows(),
                k.nrows(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let sigma = symmetrize(&sigma);
        let me = min_eig(&sigma);
        if me < -real::<T>(PSD_CLAMP_TOL) {
            return Err(Error::InvalidCovariance {
                what: "policy exploration covariance".into(),
                min_eig: to_f64(me),
            });
        }
        Ok(Policy { k, sigma })
    }

    /// Pure feedback gain, no exploration.
    pub fn pure_gain(k: DMatrix<T>) -> Self {
        let n_u = k.nrows();
        Policy {
            k,
            sigma: DMatrix::zeros(n_u, n_u),
        }
    }

    pub fn gain(&self) -> &DMatrix<T> {
        &self.k
    }

    pub fn exploration_cov(&self) -> &DMatrix<T> {
        &self.sigma
    }

    pub fn input_dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.k.ncols()
    }
}

/// A recorded run: states x_0..x_n and the inputs that produced them.
/// The final state may lack an input.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub states: Vec<DVector<T>>,
    pub inputs: Vec<DVector<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(states: Vec<DVector<T>>, inputs: Vec<DVector<T>>) -> Result<Self> {
        if states.len() != inputs.len() && states.len() != inputs.len() + 1 {
            return Err(Error::dim(format!(
                "trajectory with {} states and {} inputs is not aligned",
                states.len(),
                inputs.len()
            )));
        }
        Ok(Trajectory { states, inputs })
    }

    /// Number of (x_t, u_t, x_{t+1}) transitions extractable.
    pub fn num_transitions(&self) -> usize {
        self.inputs.len().min(self.states.len().saturating_sub(1))
    }

    /// Iterate transition triples (x_t, u_t, x_{t+1}).
    pub fn transitions(&self) -> impl Iterator<Item = (&DVector<T>, &DVector<T>, &DVector<T>)> {
        (0..self.num_transitions()).map(move |t| (&self.states[t], &self.inputs[t], &self.states[t + 1]))
    }
}

/// Partition of the horizon into epochs: boundaries τ_0 = 0 < τ_1 < … < τ_N.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSchedule {
    boundaries: Vec<usize>,
}

impl EpochSchedule {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidSchedule(
                "need at least τ_0 and τ_1".to_string(),
            ));
        }
        if boundaries[0] != 0 {
            return Err(Error::InvalidSchedule("τ_0 must be 0".to_string()));
        }
        if !boundaries.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidSchedule(
                "boundaries must be strictly increasing".to_string(),
            ));
        }
        Ok(EpochSchedule { boundaries })
    }

    /// Equal split of `total` steps into `epochs` epochs.
    pub fn uniform(total: usize, epochs: usize) -> Result<Self> {
        if epochs == 0 || total % epochs != 0 {
            return Err(Error::InvalidSchedule(format!(
                "cannot split {total} steps into {epochs} equal epochs"
            )));
        }
        let step = total / epochs;
        EpochSchedule::new((0..=epochs).map(|i| i * step).collect())
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn num_epochs(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn total_steps(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    /// Duration T_i of epoch `i` (1-based).
    pub fn duration(&self, epoch: usize) -> usize {
        assert!(epoch >= 1 && epoch <= self.num_epochs(), "epoch out of range");
        self.boundaries[epoch] - self.boundaries[epoch - 1]
    }

    /// Epoch index of time step `t`: the smallest i with t ≤ τ_i.
    /// Valid for 0 < t ≤ τ_N.
    pub fn epoch_index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.total_steps() {
            return Err(Error::InvalidSchedule(format!(
                "time {t} outside (0, {}]",
                self.total_steps()
            )));
        }
        Ok(self.boundaries.partition_point(|&tau| tau < t))
    }
}

/// Quadratic stage cost c(x, u) = x'Qx + u'Ru.
#[derive(Debug, Clone)]
pub struct CostSpec<T: Scalar> {
    q: DMatrix<T>,
    r: DMatrix<T>,
}

impl<T: Scalar> CostSpec<T> {
    pub fn new(q: DMatrix<T>, r: DMatrix<T>) -> Result<Self> {
        for (m, name) in [(&q, "Q"), (&r, "R")] {
            if !m.is_square() {
                return Err(Error::dim(format!("{name} must be square")));
            }
            let me = min_eig(&symmetrize(m));
            if me < -real::<T>(PSD_CLAMP_TOL) {
                return Err(Error::InvalidCovariance {
                    what: format!("cost matrix {name}"),
                    min_eig: to_f64(me),
                });
            }
        }
        Ok(CostSpec {
            q: symmetrize(&q),
            r: symmetrize(&r),
        })
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }

    pub fn stage_cost(&self, x: &DVector<T>, u: &DVector<T>) -> T {
        (x.transpose() * &self.q * x)[(0, 0)] + (u.transpose() * &self.r * u)[(0, 0)]
    }
}

/// Draw u = K x + Σ^{1/2} e with e standard normal.
///
/// With Σ = 0 the result is deterministic and the rng is left untouched.
pub fn apply_policy<T: Scalar, R: Rng + ?Sized>(
    policy: &Policy<T>,
    x: &DVector<T>,
    rng: &mut R,
) -> Result<DVector<T>> {
    if x.len() != policy.state_dim() {
        return Err(Error::dim(format!(
            "state has length {} but K expects {}",
            x.len(),
            policy.state_dim()
        )));
    }
    let mut u = &policy.k * x;
    if policy.sigma.iter().any(|v| *v != T::zero()) {
        let root = psd_sqrt(
            &policy.sigma,
            real::<T>(PSD_CLAMP_TOL),
            "policy exploration covariance",
        )?;
        let e = standard_normal_vector::<T, R>(rng, policy.input_dim());
        u += root * e;
    }
    Ok(u)
}

/// One transition of the system: A x + B u + w with w ~ N(0, σ_w² I).
pub fn step<T: Scalar, R: Rng + ?Sized>(
    sys: &LinearSystem<T>,
    x: &DVector<T>,
    u: &DVector<T>,
    rng: &mut R,
) -> Result<DVector<T>> {
    if x.len() != sys.state_dim() || u.len() != sys.input_dim() {
        return Err(Error::dim(format!(
            "expected state {} / input {}, got {} / {}",
            sys.state_dim(),
            sys.input_dim(),
            x.len(),
            u.len()
        )));
    }
    let mut next = &sys.a * x + &sys.b * u;
    if sys.sigma_w > T::zero() {
        next += standard_normal_vector::<T, R>(rng, sys.state_dim()) * sys.sigma_w;
    }
    Ok(next)
}

/// Roll the closed loop forward `steps` transitions from `x0`.
pub fn rollout<T: Scalar>(
    sys: &LinearSystem<T>,
    policy: &Policy<T>,
    x0: &DVector<T>,
    steps: usize,
    streams: &mut NoiseStreams,
) -> Result<Trajectory<T>> {
    if steps == 0 {
        return Err(Error::dim("rollout needs at least one step".to_string()));
    }
    if policy.state_dim() != sys.state_dim() || policy.input_dim() != sys.input_dim() {
        return Err(Error::dim("policy dimensions do not match system".to_string()));
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    let mut x = x0.clone();
    for _ in 0..steps {
        let u = apply_policy(policy, &x, &mut streams.excitation)?;
        let next = step(sys, &x, &u, &mut streams.process)?;
        states.push(x);
        inputs.push(u);
        x = next;
    }
    states.push(x);
    Trajectory::new(states, inputs)
}

/// Per-step quadratic costs of a trajectory and their sum.
#[derive(Debug, Clone)]
pub struct CostBreakdown<T: Scalar> {
    pub per_step: Vec<T>,
    pub total: T,
}

impl<T: Scalar> CostBreakdown<T> {
    /// Aggregate per-step costs into per-epoch sums. The schedule must cover
    /// the trajectory exactly: τ_N = number of cost steps.
    pub fn per_epoch(&self, schedule: &EpochSchedule) -> Result<Vec<T>> {
        if schedule.total_steps() != self.per_step.len() {
            return Err(Error::InvalidSchedule(format!(
                "schedule covers {} steps, trajectory has {}",
                schedule.total_steps(),
                self.per_step.len()
            )));
        }
        let b = schedule.boundaries();
        Ok((1..b.len())
            .map(|i| {
                self.per_step[b[i - 1]..b[i]]
                    .iter()
                    .fold(T::zero(), |acc, &c| acc + c)
            })
            .collect())
    }
}

/// Evaluate c(x_t, u_t) along a trajectory.
pub fn empirical_cost<T: Scalar>(traj: &Trajectory<T>, cost: &CostSpec<T>) -> Result<CostBreakdown<T>> {
    let steps = traj.inputs.len();
    if traj.states.len() < steps {
        return Err(Error::dim("trajectory misaligned".to_string()));
    }
    let mut per_step = Vec::with_capacity(steps);
    let mut total = T::zero();
    for t in 0..steps {
        let c = cost.stage_cost(&traj.states[t], &traj.inputs[t]);
        per_step.push(c);
        total += c;
    }
    Ok(CostBreakdown { per_step, total })
}
