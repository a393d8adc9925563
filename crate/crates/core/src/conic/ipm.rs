//! Dense primal-dual predictor-corrector interior-point method for
//! block-diagonal linear matrix inequalities.
//!
//! Solves  min c'x  s.t.  G_b(x) = F0_b + Σ_i x_i F_{i,b} ⪰ 0  for every
//! block b, tracking the Lagrange certificate X_b ⪰ 0 with
//! ⟨F_{i}, X⟩ = c_i at optimality. The Schur complement
//! M_ij = Σ_b tr(F_i Z⁻¹ F_j X) is symmetric positive definite for linearly
//! independent constraint coefficients, which the compiler guarantees by
//! rejecting unused variables.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::scalar::{real, Scalar};

/// One PSD block of the compiled problem.
#[derive(Debug, Clone)]
pub(crate) struct Block<T: Scalar> {
    pub dim: usize,
    pub f0: DMatrix<T>,
    /// Coefficient matrices keyed by packed variable index, sorted.
    pub terms: Vec<(usize, DMatrix<T>)>,
}

impl<T: Scalar> Block<T> {
    /// G_b(x) = F0 + Σ x_i F_i.
    pub fn assemble(&self, x: &DVector<T>) -> DMatrix<T> {
        let mut g = self.f0.clone();
        for (i, f) in &self.terms {
            g += f * x[*i];
        }
        g
    }
}

/// Compiled block form of a conic program.
#[derive(Debug, Clone)]
pub(crate) struct Compiled<T: Scalar> {
    pub num_vars: usize,
    pub cost: DVector<T>,
    pub blocks: Vec<Block<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IpmStatus {
    Converged,
    IterLimit,
    Stalled,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutcome<T: Scalar> {
    pub status: IpmStatus,
    pub x: DVector<T>,
    pub iterations: usize,
    pub rel_gap: T,
    pub primal_resid: T,
    pub dual_resid: T,
}

pub(crate) struct IpmParams<T> {
    pub feas_tol: T,
    pub gap_tol: T,
    pub max_iters: usize,
}

/// Largest step ᾱ with S + ᾱ D ⪰ 0, for S ≻ 0 (Cholesky whitening).
fn max_step<T: Scalar>(chol: &Cholesky<T, Dyn>, dir: &DMatrix<T>) -> T {
    // N = L⁻¹ D L⁻ᵀ; bound is -1/λmin(N) when λmin < 0
    let l = chol.l();
    let e = l.solve_lower_triangular(dir).expect("triangular solve");
    let n = l
        .solve_lower_triangular(&e.transpose())
        .expect("triangular solve");
    let sym = (&n + n.transpose()) * real::<T>(0.5);
    let lam_min = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(T::max_value().unwrap(), |a, b| a.min(b));
    if lam_min >= T::zero() {
        real::<T>(1e12)
    } else {
        -T::one() / lam_min
    }
}

fn frob_inner<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.dot(b)
}

/// Cholesky with escalating diagonal regularization.
fn robust_cholesky<T: Scalar>(m: &DMatrix<T>) -> Option<Cholesky<T, Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Some(c);
    }
    let scale = m.diagonal().amax() + T::one();
    let mut jitter = real::<T>(1e-14);
    for _ in 0..10 {
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += jitter * scale;
        }
        if let Some(c) = reg.cholesky() {
            return Some(c);
        }
        jitter *= real::<T>(10.0);
    }
    None
}

pub(crate) fn solve_ipm<T: Scalar>(prob: &Compiled<T>, params: &IpmParams<T>) -> IpmOutcome<T> {
    let m = prob.num_vars;
    let n_total: usize = prob.blocks.iter().map(|b| b.dim).sum();
    let n_total_t = real::<T>(n_total as f64);

    // problem scale for the starting point
    let mut coef_scale = T::one();
    for b in &prob.blocks {
        coef_scale = coef_scale.max(b.f0.amax());
        for (_, f) in &b.terms {
            coef_scale = coef_scale.max(f.amax());
        }
    }
    let c_scale = T::one() + prob.cost.amax();
    let init = real::<T>(10.0) * (T::one() + coef_scale).max(c_scale);

    let mut x = DVector::<T>::zeros(m);
    let mut xs: Vec<DMatrix<T>> = prob
        .blocks
        .iter()
        .map(|b| DMatrix::identity(b.dim, b.dim) * init)
        .collect();
    let mut zs: Vec<DMatrix<T>> = xs.clone();

    let trace = std::env::var_os("RRL_IPM_TRACE").is_some();
    let gamma = real::<T>(0.95);
    let mut best: Option<(T, DVector<T>)> = None;
    let mut last = IpmOutcome {
        status: IpmStatus::IterLimit,
        x: x.clone(),
        iterations: 0,
        rel_gap: T::max_value().unwrap(),
        primal_resid: T::max_value().unwrap(),
        dual_resid: T::max_value().unwrap(),
    };

    for iter in 0..params.max_iters {
        // residuals
        let rd: Vec<DMatrix<T>> = prob
            .blocks
            .iter()
            .zip(&zs)
            .map(|(b, z)| b.assemble(&x) - z)
            .collect();
        let mut rp = prob.cost.clone();
        for (bi, b) in prob.blocks.iter().enumerate() {
            for (i, f) in &b.terms {
                rp[*i] -= frob_inner(f, &xs[bi]);
            }
        }

        let gap_inner: T = xs
            .iter()
            .zip(&zs)
            .fold(T::zero(), |acc, (xb, zb)| acc + frob_inner(xb, zb));
        let mu = gap_inner / n_total_t;

        let pobj = prob.cost.dot(&x);
        let dobj = -prob
            .blocks
            .iter()
            .zip(&xs)
            .fold(T::zero(), |acc, (b, xb)| acc + frob_inner(&b.f0, xb));
        let rel_gap = (pobj - dobj).abs() / (T::one() + pobj.abs() + dobj.abs());
        let primal_resid = rp.amax() / (T::one() + prob.cost.amax());
        let dual_resid = rd
            .iter()
            .map(|r| r.amax())
            .fold(T::zero(), |a, b| a.max(b))
            / (T::one() + coef_scale);

        last = IpmOutcome {
            status: IpmStatus::IterLimit,
            x: x.clone(),
            iterations: iter,
            rel_gap,
            primal_resid,
            dual_resid,
        };

        let merit = rel_gap.max(primal_resid).max(dual_resid);
        if best.as_ref().map_or(true, |(bm, _)| merit < *bm) {
            best = Some((merit, x.clone()));
        }

        if trace {
            eprintln!(
                "ipm iter {iter}: mu={:.3e} gap={:.3e} rp={:.3e} rd={:.3e} pobj={:.8e}",
                crate::scalar::to_f64(mu),
                crate::scalar::to_f64(rel_gap),
                crate::scalar::to_f64(primal_resid),
                crate::scalar::to_f64(dual_resid),
                crate::scalar::to_f64(pobj),
            );
        }

        if rel_gap < params.gap_tol
            && primal_resid < params.feas_tol
            && dual_resid < params.feas_tol
        {
            last.status = IpmStatus::Converged;
            return last;
        }

        // factor Z blocks
        let mut chols = Vec::with_capacity(prob.blocks.len());
        for z in &zs {
            match robust_cholesky(z) {
                Some(c) => chols.push(c),
                None => {
                    last.status = IpmStatus::Stalled;
                    return last;
                }
            }
        }
        let zinvs: Vec<DMatrix<T>> = chols.iter().map(|c| c.inverse()).collect();

        // per-block precomputations: A_i = Zinv F_i, S_i = F_i X
        struct BlockWork<T: Scalar> {
            a: Vec<DMatrix<T>>,
            s: Vec<DMatrix<T>>,
        }
        let works: Vec<BlockWork<T>> = prob
            .blocks
            .iter()
            .enumerate()
            .map(|(bi, b)| BlockWork {
                a: b.terms.iter().map(|(_, f)| &zinvs[bi] * f).collect(),
                s: b.terms.iter().map(|(_, f)| f * &xs[bi]).collect(),
            })
            .collect();

        // Schur complement M and the shared residual part of the RHS
        let mut mat = DMatrix::<T>::zeros(m, m);
        let mut rhs_shared = DVector::<T>::zeros(m);
        for i in 0..m {
            rhs_shared[i] = -prob.cost[i];
        }
        for (bi, b) in prob.blocks.iter().enumerate() {
            let w = &works[bi];
            let rdx = &rd[bi] * &xs[bi];
            for (ti, (vi, _)) in b.terms.iter().enumerate() {
                rhs_shared[*vi] -= frob_inner(&w.a[ti], &rdx);
                for (tj, (vj, _)) in b.terms.iter().enumerate() {
                    if vj < vi {
                        continue;
                    }
                    let v = frob_inner(&w.a[ti], &w.s[tj]);
                    mat[(*vi, *vj)] += v;
                    if vi != vj {
                        mat[(*vj, *vi)] += v;
                    }
                }
            }
        }
        // exact symmetrization (the two triangle estimates differ by rounding)
        mat = (&mat + mat.transpose()) * real::<T>(0.5);

        let Some(mchol) = robust_cholesky(&mat) else {
            last.status = IpmStatus::Stalled;
            return last;
        };

        // predictor (affine scaling, sigma = 0)
        let dy_aff = mchol.solve(&rhs_shared);
        let mut dz_aff = Vec::with_capacity(prob.blocks.len());
        let mut dx_aff = Vec::with_capacity(prob.blocks.len());
        for (bi, b) in prob.blocks.iter().enumerate() {
            let mut dz = rd[bi].clone();
            for (i, f) in &b.terms {
                dz += f * dy_aff[*i];
            }
            let dx = -&xs[bi] - &zinvs[bi] * &dz * &xs[bi];
            let dx = (&dx + dx.transpose()) * real::<T>(0.5);
            dz_aff.push(dz);
            dx_aff.push(dx);
        }

        let mut ap_aff = T::one();
        let mut ad_aff = T::one();
        for (bi, _) in prob.blocks.iter().enumerate() {
            let xc = robust_cholesky(&xs[bi]);
            let ap = xc
                .as_ref()
                .map(|c| max_step(c, &dx_aff[bi]))
                .unwrap_or(T::zero());
            ap_aff = ap_aff.min(ap);
            ad_aff = ad_aff.min(max_step(&chols[bi], &dz_aff[bi]));
        }
        ap_aff = ap_aff.min(T::one());
        ad_aff = ad_aff.min(T::one());

        let mut gap_aff = T::zero();
        for bi in 0..prob.blocks.len() {
            let xn = &xs[bi] + &dx_aff[bi] * ap_aff;
            let zn = &zs[bi] + &dz_aff[bi] * ad_aff;
            gap_aff += frob_inner(&xn, &zn);
        }
        let mu_aff = (gap_aff / n_total_t).max(T::zero());
        let sigma = {
            let ratio = (mu_aff / mu).max(T::zero()).min(T::one());
            ratio * ratio * ratio
        };

        // corrector
        let mut rhs = rhs_shared.clone();
        let smu = sigma * mu;
        for (bi, b) in prob.blocks.iter().enumerate() {
            let w = &works[bi];
            let cross = &dz_aff[bi] * &dx_aff[bi];
            for (ti, (vi, _)) in b.terms.iter().enumerate() {
                rhs[*vi] += smu * w.a[ti].trace() - frob_inner(&w.a[ti], &cross);
            }
        }
        let dy = mchol.solve(&rhs);
        let mut dzs = Vec::with_capacity(prob.blocks.len());
        let mut dxs = Vec::with_capacity(prob.blocks.len());
        for (bi, b) in prob.blocks.iter().enumerate() {
            let mut dz = rd[bi].clone();
            for (i, f) in &b.terms {
                dz += f * dy[*i];
            }
            let correction = DMatrix::<T>::identity(b.dim, b.dim) * smu - &dz_aff[bi] * &dx_aff[bi];
            let dx = &zinvs[bi] * &correction - &xs[bi] - &zinvs[bi] * &dz * &xs[bi];
            let dx = (&dx + dx.transpose()) * real::<T>(0.5);
            dzs.push(dz);
            dxs.push(dx);
        }

        let mut ap = T::max_value().unwrap();
        let mut ad = T::max_value().unwrap();
        for bi in 0..prob.blocks.len() {
            let xc = robust_cholesky(&xs[bi]);
            let sp = xc
                .as_ref()
                .map(|c| max_step(c, &dxs[bi]))
                .unwrap_or(T::zero());
            ap = ap.min(sp);
            ad = ad.min(max_step(&chols[bi], &dzs[bi]));
        }
        let ap = (gamma * ap).min(T::one());
        let ad = (gamma * ad).min(T::one());

        if ap < real::<T>(1e-10) && ad < real::<T>(1e-10) {
            last.status = IpmStatus::Stalled;
            last.iterations = iter;
            return last;
        }

        for bi in 0..prob.blocks.len() {
            xs[bi] += &dxs[bi] * ap;
            zs[bi] += &dzs[bi] * ad;
        }
        x += &dy * ad;
    }

    if let Some((_, bx)) = best {
        last.x = bx;
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> IpmParams<f64> {
        IpmParams {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iters: 200,
        }
    }

    /// min tr(W) s.t. W ⪰ I with W a 2x2 symmetric variable.
    #[test]
    fn projection_onto_identity() {
        // vars: w00, w10, w11 (lower triangle)
        let f = |i: usize, j: usize| {
            let mut m = DMatrix::<f64>::zeros(2, 2);
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
            m
        };
        let prob = Compiled {
            num_vars: 3,
            cost: DVector::from_vec(vec![1.0, 0.0, 1.0]),
            blocks: vec![Block {
                dim: 2,
                f0: -DMatrix::<f64>::identity(2, 2),
                terms: vec![(0, f(0, 0)), (1, f(1, 0)), (2, f(1, 1))],
            }],
        };
        let out = solve_ipm(&prob, &params());
        assert_eq!(out.status, IpmStatus::Converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6, "w00 = {}", out.x[0]);
        assert!(out.x[1].abs() < 1e-6);
        assert!((out.x[2] - 1.0).abs() < 1e-6);
    }

    /// min λ s.t. λ ≥ 0, λ I − I ⪰ 0.
    #[test]
    fn scalar_eigenvalue_bound() {
        let prob = Compiled {
            num_vars: 1,
            cost: DVector::from_vec(vec![1.0]),
            blocks: vec![
                Block {
                    dim: 2,
                    f0: -DMatrix::<f64>::identity(2, 2),
                    terms: vec![(0, DMatrix::identity(2, 2))],
                },
                Block {
                    dim: 1,
                    f0: DMatrix::zeros(1, 1),
                    terms: vec![(0, DMatrix::identity(1, 1))],
                },
            ],
        };
        let out = solve_ipm(&prob, &params());
        assert_eq!(out.status, IpmStatus::Converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6, "λ = {}", out.x[0]);
    }

    /// Scalar Lyapunov fixed point: min w s.t. w ≥ 0.25 w + 1 → w = 4/3.
    #[test]
    fn scalar_lyapunov_fixed_point() {
        let prob = Compiled {
            num_vars: 1,
            cost: DVector::from_vec(vec![1.0]),
            blocks: vec![Block {
                dim: 1,
                f0: DMatrix::from_row_slice(1, 1, &[-1.0]),
                terms: vec![(0, DMatrix::from_row_slice(1, 1, &[0.75]))],
            }],
        };
        let out = solve_ipm(&prob, &params());
        assert_eq!(out.status, IpmStatus::Converged);
        assert!((out.x[0] - 4.0 / 3.0).abs() < 1e-6, "w = {}", out.x[0]);
    }

    /// Infeasible instance: x ≥ 0 and -1 - x ≥ 0 cannot hold together.
    #[test]
    fn infeasible_never_converges() {
        let prob = Compiled {
            num_vars: 1,
            cost: DVector::from_vec(vec![1.0]),
            blocks: vec![
                Block {
                    dim: 1,
                    f0: DMatrix::zeros(1, 1),
                    terms: vec![(0, DMatrix::identity(1, 1))],
                },
                Block {
                    dim: 1,
                    f0: DMatrix::from_row_slice(1, 1, &[-1.0]),
                    terms: vec![(0, -DMatrix::<f64>::identity(1, 1))],
                },
            ],
        };
        let out = solve_ipm(&prob, &params());
        assert_ne!(out.status, IpmStatus::Converged);
    }
}
