//! Worst-case infinite-horizon LQR synthesis.
//!
//! Builds the robust LMI S(λ, Ξ, Â, B̂, D), solves the policy-synthesis SDP,
//! recovers static-gain policies from the stationary covariance block, and
//! evaluates the worst-case cost of a fixed policy over the spectral
//! uncertainty region.

use nalgebra::DMatrix;

use crate::conic::{AffineMat, ConicProgram, ScalarExpr, SolveOptions, SolveStatus};
use crate::error::{Error, Result};
use crate::estimation::UncertainModel;
use crate::linalg::{blkdiag, clamp_psd, min_eig, solve_spd_right, symmetrize};
use crate::scalar::{real, to_f64, Scalar};
use crate::simulation::{CostSpec, Policy};

/// Tolerance on the PSD-ness of a recovered exploration covariance.
pub const SIGMA_CLAMP_TOL: f64 = 1e-8;
/// Minimum eigenvalue the recovered state covariance must exceed.
pub const W_MIN_EIG: f64 = 1e-10;
/// Tolerance on the PSD-ness of the full covariance block.
pub const XI_PSD_TOL: f64 = 1e-8;

/// Joint stationary covariance block
/// Ξ = [[W, Z], [Z', Y]] with W the state covariance, Z = WK' and
/// Y = KWK' + Σ.
#[derive(Debug, Clone)]
pub struct CovarianceBlock<T: Scalar> {
    w: DMatrix<T>,
    z: DMatrix<T>,
    y: DMatrix<T>,
}

impl<T: Scalar> CovarianceBlock<T> {
    pub fn new(w: DMatrix<T>, z: DMatrix<T>, y: DMatrix<T>) -> Result<Self> {
        let n_x = w.nrows();
        let n_u = y.nrows();
        if !w.is_square() || !y.is_square() || z.nrows() != n_x || z.ncols() != n_u {
            return Err(Error::dim("covariance block shapes inconsistent".to_string()));
        }
        let block = CovarianceBlock {
            w: symmetrize(&w),
            z,
            y: symmetrize(&y),
        };
        let xi = block.assemble();
        let me = min_eig(&xi);
        if me < -real::<T>(XI_PSD_TOL) {
            return Err(Error::InvalidCovariance {
                what: "covariance block".into(),
                min_eig: to_f64(me),
            });
        }
        if min_eig(&block.w) <= real::<T>(W_MIN_EIG) {
            return Err(Error::NumericalTrouble(
                "stationary state covariance is singular".to_string(),
            ));
        }
        Ok(block)
    }

    /// Split a full (n_x+n_u)-dimensional block matrix.
    pub fn from_xi(xi: &DMatrix<T>, n_x: usize, n_u: usize) -> Result<Self> {
        if xi.nrows() != n_x + n_u || !xi.is_square() {
            return Err(Error::dim(format!(
                "covariance block must be {0}x{0}",
                n_x + n_u
            )));
        }
        CovarianceBlock::new(
            xi.view((0, 0), (n_x, n_x)).into_owned(),
            xi.view((0, n_x), (n_x, n_u)).into_owned(),
            xi.view((n_x, n_x), (n_u, n_u)).into_owned(),
        )
    }

    pub fn w(&self) -> &DMatrix<T> {
        &self.w
    }

    pub fn z(&self) -> &DMatrix<T> {
        &self.z
    }

    pub fn y(&self) -> &DMatrix<T> {
        &self.y
    }

    pub fn state_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.y.nrows()
    }

    /// Assemble the full Ξ matrix.
    pub fn assemble(&self) -> DMatrix<T> {
        let n_x = self.state_dim();
        let n_u = self.input_dim();
        let mut xi = DMatrix::zeros(n_x + n_u, n_x + n_u);
        xi.view_mut((0, 0), (n_x, n_x)).copy_from(&self.w);
        xi.view_mut((0, n_x), (n_x, n_u)).copy_from(&self.z);
        xi.view_mut((n_x, 0), (n_u, n_x)).copy_from(&self.z.transpose());
        xi.view_mut((n_x, n_x), (n_u, n_u)).copy_from(&self.y);
        xi
    }

    /// Recover the policy K = Z'W⁻¹, Σ = Y − Z'W⁻¹Z.
    pub fn recover_policy(&self) -> Result<Policy<T>> {
        let k = solve_spd_right(&self.w, &self.z.transpose())?;
        let sigma_raw = &self.y - &k * &self.z;
        let sigma = clamp_psd(
            &sigma_raw,
            real::<T>(SIGMA_CLAMP_TOL),
            "recovered exploration covariance",
        )?;
        Policy::new(k, sigma)
    }

    /// The stationary block implied by a fixed policy and state covariance:
    /// Ξ = [I;K] W [I;K]' + blkdiag(0, Σ).
    pub fn from_policy(w: &DMatrix<T>, policy: &Policy<T>) -> Result<Self> {
        let k = policy.gain();
        let z = symmetrize(w) * k.transpose();
        let y = k * &z + policy.exploration_cov();
        CovarianceBlock::new(w.clone(), z, y)
    }
}

/// Output of a robust synthesis solve.
#[derive(Debug, Clone)]
pub struct SynthesisResult<T: Scalar> {
    pub policy: Policy<T>,
    pub xi: CovarianceBlock<T>,
    /// S-procedure multiplier at the optimum.
    pub lambda: T,
    /// Worst-case stationary cost bound.
    pub wc_cost: T,
}

/// Worst-case evaluation of a fixed policy.
#[derive(Debug, Clone)]
pub struct WorstCaseEval<T: Scalar> {
    pub wc_cost: T,
    pub lambda: T,
    pub xi: CovarianceBlock<T>,
}

fn stacked_nominal<T: Scalar>(a_hat: &DMatrix<T>, b_hat: &DMatrix<T>) -> DMatrix<T> {
    let n_x = a_hat.nrows();
    let n_u = b_hat.ncols();
    let mut h = DMatrix::zeros(n_x, n_x + n_u);
    h.view_mut((0, 0), (n_x, n_x)).copy_from(a_hat);
    h.view_mut((0, n_x), (n_x, n_u)).copy_from(b_hat);
    h
}

/// Numeric value of the robust LMI
/// S = [[I, σ_w I, 0], [σ_w I, W − HΞH' − λI, HΞ], [0, ΞH', λD − Ξ]]
/// with H = [Â B̂]; dimension 3·n_x + n_u.
pub fn build_s<T: Scalar>(
    lambda: T,
    xi: &CovarianceBlock<T>,
    a_hat: &DMatrix<T>,
    b_hat: &DMatrix<T>,
    d: &DMatrix<T>,
    sigma_w: T,
) -> Result<DMatrix<T>> {
    let n_x = a_hat.nrows();
    let n_u = b_hat.ncols();
    if xi.state_dim() != n_x || xi.input_dim() != n_u || d.nrows() != n_x + n_u || !d.is_square() {
        return Err(Error::dim("robust LMI inputs inconsistent".to_string()));
    }
    let h = stacked_nominal(a_hat, b_hat);
    let xi_full = xi.assemble();
    let hxi = &h * &xi_full;
    let dim = 3 * n_x + n_u;
    let mut s = DMatrix::zeros(dim, dim);
    let eye = DMatrix::<T>::identity(n_x, n_x);

    s.view_mut((0, 0), (n_x, n_x)).copy_from(&eye);
    s.view_mut((0, n_x), (n_x, n_x)).copy_from(&(&eye * sigma_w));
    s.view_mut((n_x, 0), (n_x, n_x)).copy_from(&(&eye * sigma_w));
    let middle = xi.w() - &hxi * h.transpose() - &eye * lambda;
    s.view_mut((n_x, n_x), (n_x, n_x)).copy_from(&symmetrize(&middle));
    s.view_mut((n_x, 2 * n_x), (n_x, n_x + n_u)).copy_from(&hxi);
    s.view_mut((2 * n_x, n_x), (n_x + n_u, n_x))
        .copy_from(&hxi.transpose());
    let corner = d * lambda - &xi_full;
    s.view_mut((2 * n_x, 2 * n_x), (n_x + n_u, n_x + n_u))
        .copy_from(&symmetrize(&corner));
    Ok(s)
}

/// Affine version of [`build_s`] for program construction: the caller
/// supplies Ξ, λ·I and λ·D as affine matrix expressions.
pub(crate) fn s_lmi_affine<T: Scalar>(
    xi: &AffineMat<T>,
    lambda_i: &AffineMat<T>,
    lambda_d: &AffineMat<T>,
    a_hat: &DMatrix<T>,
    b_hat: &DMatrix<T>,
    sigma_w: T,
) -> AffineMat<T> {
    let n_x = a_hat.nrows();
    let n_u = b_hat.ncols();
    debug_assert_eq!(xi.rows(), n_x + n_u);
    debug_assert_eq!(lambda_i.rows(), n_x);
    debug_assert_eq!(lambda_d.rows(), n_x + n_u);
    let h = stacked_nominal(a_hat, b_hat);
    let eye_x = DMatrix::<T>::identity(n_x, n_x);
    let eye_xu = DMatrix::<T>::identity(n_x + n_u, n_x + n_u);

    let dim = 3 * n_x + n_u;
    let mut s = AffineMat::zeros(dim, dim);
    s.set_block(0, 0, &AffineMat::from_const(&eye_x));
    let sw = AffineMat::from_const(&(&eye_x * sigma_w));
    s.set_block(0, n_x, &sw);
    s.set_block(n_x, 0, &sw);

    let middle = xi
        .block(0, 0, n_x, n_x)
        .sub(&xi.sandwich_const(&h, &h))
        .sub(lambda_i);
    s.set_block(n_x, n_x, &middle);

    let hxi = xi.sandwich_const(&h, &eye_xu);
    s.set_block(n_x, 2 * n_x, &hxi);
    s.set_block(2 * n_x, n_x, &hxi.transpose());

    let corner = lambda_d.sub(xi);
    s.set_block(2 * n_x, 2 * n_x, &corner);
    s
}

fn check_model_cost_dims<T: Scalar>(model: &UncertainModel<T>, cost: &CostSpec<T>) -> Result<()> {
    if cost.q().nrows() != model.state_dim() || cost.r().nrows() != model.input_dim() {
        return Err(Error::dim(
            "cost matrices do not match model dimensions".to_string(),
        ));
    }
    Ok(())
}

/// Jointly optimize the policy and multiplier:
/// min tr(blkdiag(Q,R)·Ξ) s.t. S(λ, Ξ) ⪰ 0, Ξ ⪰ 0, λ ≥ 0.
pub fn synthesize_robust<T: Scalar>(
    model: &UncertainModel<T>,
    cost: &CostSpec<T>,
    sigma_w: T,
    opts: &SolveOptions<T>,
) -> Result<SynthesisResult<T>> {
    check_model_cost_dims(model, cost)?;
    let n_x = model.state_dim();
    let n_u = model.input_dim();

    let mut prog = ConicProgram::<T>::new();
    let xi = prog.add_matrix_var("Xi", n_x + n_u, true);
    let lam = prog.add_scalar_var("lambda", true);

    let xi_aff = prog.mat_as_affine(xi);
    let lam_expr = prog.scalar_expr(lam);
    let lambda_i = AffineMat::const_times_expr(&DMatrix::identity(n_x, n_x), &lam_expr);
    let lambda_d = AffineMat::const_times_expr(&model.d, &lam_expr);
    let s = s_lmi_affine(&xi_aff, &lambda_i, &lambda_d, &model.a_hat, &model.b_hat, sigma_w);
    prog.add_lmi("S", s)?;
    prog.set_objective(prog.trace_prod(&blkdiag(cost.q(), cost.r()), xi));

    let sol = prog.solve(opts)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::NoRobustlyStabilizingPolicy),
        SolveStatus::NumericalTrouble => {
            return Err(Error::NumericalTrouble(
                "robust synthesis SDP did not converge".to_string(),
            ))
        }
    }
    let xi_val = prog.matrix_value(&sol, xi).expect("optimal solution has Xi");
    let lambda = prog.scalar_value(&sol, lam).expect("optimal solution has lambda");
    let block = CovarianceBlock::from_xi(&xi_val, n_x, n_u)?;
    let policy = block.recover_policy()?;
    Ok(SynthesisResult {
        policy,
        xi: block,
        lambda,
        wc_cost: sol.objective_value.expect("optimal solution has objective"),
    })
}

/// Worst-case stationary cost of a fixed policy: the same program with Ξ
/// structurally constrained to [I;K] W [I;K]' + blkdiag(0, Σ), leaving
/// (W, λ) free.
pub fn evaluate_wc_cost<T: Scalar>(
    policy: &Policy<T>,
    model: &UncertainModel<T>,
    cost: &CostSpec<T>,
    sigma_w: T,
    opts: &SolveOptions<T>,
) -> Result<WorstCaseEval<T>> {
    check_model_cost_dims(model, cost)?;
    let n_x = model.state_dim();
    let n_u = model.input_dim();
    if policy.state_dim() != n_x || policy.input_dim() != n_u {
        return Err(Error::dim("policy does not match model dimensions".to_string()));
    }

    let k = policy.gain();
    let sigma = policy.exploration_cov();
    // J = [I; K]
    let mut j = DMatrix::zeros(n_x + n_u, n_x);
    j.view_mut((0, 0), (n_x, n_x))
        .copy_from(&DMatrix::identity(n_x, n_x));
    j.view_mut((n_x, 0), (n_u, n_x)).copy_from(k);
    let sigma_pad = blkdiag(&DMatrix::zeros(n_x, n_x), sigma);

    let mut prog = ConicProgram::<T>::new();
    let w = prog.add_matrix_var("W", n_x, true);
    let lam = prog.add_scalar_var("lambda", true);

    let xi_aff = prog
        .sandwich(&j, w, &j)
        .add(&AffineMat::from_const(&sigma_pad));
    let lam_expr = prog.scalar_expr(lam);
    let lambda_i = AffineMat::const_times_expr(&DMatrix::identity(n_x, n_x), &lam_expr);
    let lambda_d = AffineMat::const_times_expr(&model.d, &lam_expr);
    let s = s_lmi_affine(&xi_aff, &lambda_i, &lambda_d, &model.a_hat, &model.b_hat, sigma_w);
    prog.add_lmi("S", s)?;

    // tr(blkdiag(Q,R)(JWJ' + blkdiag(0,Σ))) = tr((Q + K'RK) W) + tr(RΣ)
    let weight = cost.q() + k.transpose() * cost.r() * k;
    let constant = (cost.r() * sigma).trace();
    let objective = prog.trace_prod(&weight, w) + ScalarExpr::constant(constant);
    prog.set_objective(objective);

    let sol = prog.solve(opts)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::PolicyNotRobustlyStabilizing),
        SolveStatus::NumericalTrouble => {
            return Err(Error::NumericalTrouble(
                "worst-case evaluation SDP did not converge".to_string(),
            ))
        }
    }
    let w_val = prog.matrix_value(&sol, w).expect("optimal solution has W");
    let lambda = prog.scalar_value(&sol, lam).expect("optimal solution has lambda");
    let xi = CovarianceBlock::from_policy(&w_val, policy)?;
    Ok(WorstCaseEval {
        wc_cost: sol.objective_value.expect("optimal solution has objective"),
        lambda,
        xi,
    })
}

/// Infinite-horizon discrete-time LQR gain by Riccati fixed-point iteration,
/// with the sign convention u = Kx.
pub fn lqr_riccati<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let n_x = a.nrows();
    let n_u = b.ncols();
    if !a.is_square() || b.nrows() != n_x || q.nrows() != n_x || r.nrows() != n_u {
        return Err(Error::dim("Riccati inputs inconsistent".to_string()));
    }
    let tol = real::<T>(1e-12);
    let max_iters = 100_000;
    let mut p = q.clone();
    for _ in 0..max_iters {
        let btp = b.transpose() * &p;
        let gain_denom = r + &btp * b;
        let inv = gain_denom
            .clone()
            .try_inverse()
            .ok_or(Error::NotStabilizable)?;
        let next = a.transpose() * &p * a - a.transpose() * &p * b * &inv * &btp * a + q;
        let next = symmetrize(&next);
        let delta = (&next - &p).amax();
        p = next;
        if delta < tol {
            let btp = b.transpose() * &p;
            let inv = (r + &btp * b).try_inverse().ok_or(Error::NotStabilizable)?;
            return Ok(-(inv * btp * a));
        }
    }
    Err(Error::NotStabilizable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn solve_opts() -> SolveOptions<f64> {
        SolveOptions::default()
    }

    fn scalar_model(a: f64, b: f64, d_scale: f64) -> UncertainModel<f64> {
        UncertainModel::new(
            DMatrix::from_row_slice(1, 1, &[a]),
            DMatrix::from_row_slice(1, 1, &[b]),
            DMatrix::identity(2, 2) * d_scale,
            0.05,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn build_s_dimension() {
        let xi = CovarianceBlock::new(
            DMatrix::identity(3, 3),
            DMatrix::zeros(3, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let s = build_s(
            0.5,
            &xi,
            &DMatrix::identity(3, 3),
            &DMatrix::zeros(3, 2),
            &DMatrix::identity(5, 5),
            0.5,
        )
        .unwrap();
        assert_eq!(s.shape(), (11, 11));
    }

    #[test]
    fn build_s_zero_case() {
        // Â = 0, B̂ = 0, λ = 0, σ_w = 0, Z = Y = 0, W = I: every coupling
        // term vanishes and S is blkdiag(I, W, −Ξ) with Ξ = blkdiag(W, 0)
        let xi = CovarianceBlock::new(
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let s = build_s(
            0.0,
            &xi,
            &DMatrix::zeros(1, 1),
            &DMatrix::zeros(1, 1),
            &DMatrix::identity(2, 2),
            0.0,
        )
        .unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected[(0, 0)] = 1.0;
        expected[(1, 1)] = 1.0;
        expected[(2, 2)] = -1.0;
        assert_relative_eq!(s, expected, epsilon = 1e-14);
    }

    #[test]
    fn build_s_symmetric_for_random_inputs() {
        let mut streams = crate::rng::NoiseStreams::from_master(17, 0);
        for _ in 0..5 {
            let raw = DMatrix::from_fn(3, 3, |_, _| {
                crate::rng::standard_normal_vector::<f64, _>(&mut streams.process, 1)[0]
            });
            let xi_mat = &raw * raw.transpose() + DMatrix::identity(3, 3) * 0.5;
            let xi = CovarianceBlock::from_xi(&xi_mat, 2, 1).unwrap();
            let a = DMatrix::from_fn(2, 2, |_, _| {
                crate::rng::standard_normal_vector::<f64, _>(&mut streams.process, 1)[0]
            });
            let b = DMatrix::from_fn(2, 1, |_, _| {
                crate::rng::standard_normal_vector::<f64, _>(&mut streams.process, 1)[0]
            });
            let s = build_s(0.7, &xi, &a, &b, &DMatrix::identity(3, 3), 0.3).unwrap();
            assert!((&s - s.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn riccati_zero_dynamics() {
        let k = lqr_riccati(
            &DMatrix::<f64>::zeros(2, 2),
            &DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            &DMatrix::identity(2, 2),
            &DMatrix::identity(1, 1),
        )
        .unwrap();
        assert!(k.amax() < 1e-10);
    }

    #[test]
    fn riccati_deadbeat_limit() {
        let k = lqr_riccati(
            &DMatrix::from_row_slice(1, 1, &[1.2]),
            &DMatrix::from_row_slice(1, 1, &[1.0]),
            &DMatrix::identity(1, 1),
            &DMatrix::from_row_slice(1, 1, &[1e-8]),
        )
        .unwrap();
        assert_relative_eq!(k[(0, 0)], -1.2, epsilon = 1e-4);
    }

    #[test]
    fn riccati_stabilizes_two_state_instance() {
        let a = DMatrix::from_row_slice(2, 2, &[1.1, 0.4, -0.2, 0.9]);
        let b = DMatrix::from_row_slice(2, 1, &[0.3, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1) * 0.5;
        let k = lqr_riccati(&a, &b, &q, &r).unwrap();
        let acl = &a + &b * &k;
        let radius = acl
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
        assert!(radius < 1.0, "spectral radius {radius}");
    }

    #[test]
    fn synthesize_uncontrollable_stable_scalar() {
        // B̂ = 0, Â = 0.5 stable, negligible uncertainty: K = 0 and the cost
        // approaches the noise-driven series σ²/(1−a²) = 4/3. The coupling
        // through the S-block corner leaves a residual of order W/sqrt(d),
        // about 1.8e-4 at d = 1e8.
        let model = scalar_model(0.5, 0.0, 1e8);
        let cost = CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let res = synthesize_robust(&model, &cost, 1.0, &solve_opts()).unwrap();
        assert!(res.policy.gain().amax() < 1e-3, "K = {}", res.policy.gain());
        assert_relative_eq!(res.wc_cost, 4.0 / 3.0, epsilon = 5e-4);
        assert!(res.policy.exploration_cov().trace() < 1e-4);
    }

    #[test]
    fn synthesis_exploitation_has_no_exploration() {
        // pure synthesis drives Σ to zero
        for (a, b) in [(0.9, 1.0), (1.05, 0.8), (0.3, 0.4)] {
            let model = scalar_model(a, b, 50.0);
            let cost = CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
            let res = synthesize_robust(&model, &cost, 0.5, &solve_opts()).unwrap();
            assert!(
                res.policy.exploration_cov().trace() < 1e-4,
                "trace(Σ) = {}",
                res.policy.exploration_cov().trace()
            );
        }
    }

    #[test]
    fn evaluate_matches_synthesis_at_its_own_policy() {
        let model = scalar_model(0.9, 1.0, 30.0);
        let cost = CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1) * 0.5).unwrap();
        let synth = synthesize_robust(&model, &cost, 0.7, &solve_opts()).unwrap();
        let eval = evaluate_wc_cost(&synth.policy, &model, &cost, 0.7, &solve_opts()).unwrap();
        let rel = (eval.wc_cost - synth.wc_cost).abs() / synth.wc_cost.abs();
        assert!(rel < 1e-5, "relative mismatch {rel}");
    }

    #[test]
    fn evaluate_white_noise_state() {
        // K = 0, Σ = 0, Â = 0: state is pure noise, cost = tr(Q)·σ_w²
        let model = scalar_model(0.0, 0.7, 1e8);
        let cost = CostSpec::new(DMatrix::identity(1, 1) * 2.0, DMatrix::identity(1, 1)).unwrap();
        let policy = Policy::pure_gain(DMatrix::zeros(1, 1));
        let eval = evaluate_wc_cost(&policy, &model, &cost, 0.5, &solve_opts()).unwrap();
        assert_relative_eq!(eval.wc_cost, 2.0 * 0.25, epsilon = 1e-4);
    }

    #[test]
    fn evaluate_cost_monotone_in_exploration() {
        let model = scalar_model(0.6, 1.0, 100.0);
        let cost = CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let k = DMatrix::from_row_slice(1, 1, &[-0.3]);
        let mut prev = -1.0;
        for alpha in [0.0, 0.5, 1.0, 2.0] {
            let policy = Policy::new(k.clone(), DMatrix::identity(1, 1) * alpha * alpha).unwrap();
            let eval = evaluate_wc_cost(&policy, &model, &cost, 1.0, &solve_opts()).unwrap();
            assert!(
                eval.wc_cost > prev - 1e-8,
                "cost decreased: {} -> {}",
                prev,
                eval.wc_cost
            );
            prev = eval.wc_cost;
        }
    }

    #[test]
    fn infeasible_when_uncertainty_overwhelms() {
        // unstable nominal with an enormous uncertainty region
        let model = scalar_model(1.5, 1.0, 1e-6);
        let cost = CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let err = synthesize_robust(&model, &cost, 1.0, &solve_opts()).unwrap_err();
        assert!(matches!(err, Error::NoRobustlyStabilizingPolicy), "{err}");
    }

    #[test]
    fn recovered_sigma_is_psd_for_random_blocks() {
        let mut streams = crate::rng::NoiseStreams::from_master(5, 0);
        for _ in 0..50 {
            let raw = DMatrix::from_fn(3, 3, |_, _| {
                crate::rng::standard_normal_vector::<f64, _>(&mut streams.process, 1)[0]
            });
            let xi_mat = &raw * raw.transpose() + DMatrix::identity(3, 3) * 1e-3;
            let block = CovarianceBlock::from_xi(&xi_mat, 2, 1).unwrap();
            let policy = block.recover_policy().unwrap();
            let me = min_eig(policy.exploration_cov());
            assert!(me >= -SIGMA_CLAMP_TOL, "min eig {me}");
        }
    }

    #[test]
    fn monotone_in_uncertainty() {
        // shrinking D (growing the region) never decreases the cost bound
        let cost = CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let model_tight = scalar_model(0.9, 1.0, 100.0);
        let model_loose = model_tight.with_d(model_tight.d.clone() / 4.0).unwrap();
        let tight = synthesize_robust(&model_tight, &cost, 0.5, &solve_opts()).unwrap();
        let loose = synthesize_robust(&model_loose, &cost, 0.5, &solve_opts()).unwrap();
        assert!(
            loose.wc_cost >= tight.wc_cost - 1e-7,
            "loose {} < tight {}",
            loose.wc_cost,
            tight.wc_cost
        );
    }

    #[test]
    fn wc_cost_equals_trace_form_of_xi() {
        let model = scalar_model(0.8, 0.9, 40.0);
        let q = DMatrix::identity(1, 1) * 2.0;
        let r = DMatrix::identity(1, 1) * 0.3;
        let cost = CostSpec::new(q.clone(), r.clone()).unwrap();
        let res = synthesize_robust(&model, &cost, 0.6, &solve_opts()).unwrap();
        let trace_form = (q * res.xi.w()).trace() + (r * res.xi.y()).trace();
        let rel = (trace_form - res.wc_cost).abs() / res.wc_cost.abs().max(1e-12);
        assert!(rel < 1e-6, "relative mismatch {rel}");
    }

    #[test]
    fn lambda_is_nonnegative() {
        let model = scalar_model(0.9, 1.0, 10.0);
        let cost = CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let res = synthesize_robust(&model, &cost, 0.5, &solve_opts()).unwrap();
        assert!(res.lambda >= 0.0);
        let s = build_s(
            res.lambda,
            &res.xi,
            &model.a_hat,
            &model.b_hat,
            &model.d,
            0.5,
        )
        .unwrap();
        assert!(min_eig(&s) >= -1e-6, "S residual {}", min_eig(&s));
    }

    #[test]
    fn covariance_block_rejects_indefinite() {
        let xi = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CovarianceBlock::from_xi(&xi, 1, 1).is_err());
        let singular_w = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
        assert!(CovarianceBlock::from_xi(&singular_w, 1, 1).is_err());
    }
}
