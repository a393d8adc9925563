//! Solver-agnostic representation of linear-objective optimization over PSD
//! matrix variables and nonnegative scalars, with a dense interior-point
//! reference backend.
//!
//! A program owns symmetric matrix variables (optionally constrained PSD),
//! scalar variables (optionally nonnegative), a linear objective and a list
//! of affine LMI constraints. After a solve the returned assignment is
//! re-verified against every declared LMI by eigenvalue evaluation; solver
//! status alone is never trusted.

mod expr;
mod ipm;

pub use expr::{AffineMat, ScalarExpr};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::min_eig;
use crate::scalar::{real, to_f64, Scalar};

use ipm::{solve_ipm, Block, Compiled, IpmParams, IpmStatus};

/// Handle to a symmetric matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatVar(usize);

/// Handle to a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarVar(usize);

#[derive(Debug, Clone)]
struct MatDecl {
    name: String,
    dim: usize,
    psd: bool,
    base: usize,
}

#[derive(Debug, Clone)]
struct ScalarDecl {
    name: String,
    nonneg: bool,
    index: usize,
}

/// Solver termination status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalTrouble,
}

/// Tolerances for [`ConicProgram::solve`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<T: Scalar> {
    /// Feasibility tolerance: every LMI must have min eigenvalue ≥ −feas_tol
    /// at the returned assignment.
    pub feas_tol: T,
    /// Relative duality-gap tolerance.
    pub opt_tol: T,
    /// Interior-point iteration cap per solve attempt.
    pub max_iters: usize,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            feas_tol: real::<T>(1e-7),
            opt_tol: real::<T>(1e-7),
            max_iters: 200,
        }
    }
}

/// Variable assignment in a solution.
#[derive(Debug, Clone)]
pub enum VarValue<T: Scalar> {
    Matrix(DMatrix<T>),
    Scalar(T),
}

/// Outcome of a solve.
#[derive(Debug, Clone)]
pub struct ConicSolution<T: Scalar> {
    pub status: SolveStatus,
    pub objective_value: Option<T>,
    assignments: BTreeMap<String, VarValue<T>>,
    packed: Option<Vec<T>>,
}

impl<T: Scalar> ConicSolution<T> {
    pub fn assignments(&self) -> &BTreeMap<String, VarValue<T>> {
        &self.assignments
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Packed raw variable vector (empty unless optimal).
    pub fn packed(&self) -> Option<&[T]> {
        self.packed.as_deref()
    }
}

/// Linear-objective program over PSD matrix variables, nonnegative scalars
/// and affine LMI constraints.
#[derive(Debug, Clone)]
pub struct ConicProgram<T: Scalar> {
    mats: Vec<MatDecl>,
    scalars: Vec<ScalarDecl>,
    num_vars: usize,
    objective: ScalarExpr<T>,
    lmis: Vec<(String, AffineMat<T>)>,
}

impl<T: Scalar> Default for ConicProgram<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn tri_index(i: usize, j: usize) -> usize {
    debug_assert!(i >= j);
    i * (i + 1) / 2 + j
}

impl<T: Scalar> ConicProgram<T> {
    pub fn new() -> Self {
        ConicProgram {
            mats: Vec::new(),
            scalars: Vec::new(),
            num_vars: 0,
            objective: ScalarExpr::zero(),
            lmis: Vec::new(),
        }
    }

    /// Declare a symmetric `dim × dim` matrix variable; `psd` adds V ⪰ 0.
    pub fn add_matrix_var(&mut self, name: &str, dim: usize, psd: bool) -> MatVar {
        assert!(dim >= 1, "matrix variable needs positive dimension");
        let base = self.num_vars;
        self.num_vars += dim * (dim + 1) / 2;
        self.mats.push(MatDecl {
            name: name.to_string(),
            dim,
            psd,
            base,
        });
        MatVar(self.mats.len() - 1)
    }

    /// Declare a scalar variable; `nonneg` adds s ≥ 0.
    pub fn add_scalar_var(&mut self, name: &str, nonneg: bool) -> ScalarVar {
        let index = self.num_vars;
        self.num_vars += 1;
        self.scalars.push(ScalarDecl {
            name: name.to_string(),
            nonneg,
            index,
        });
        ScalarVar(self.scalars.len() - 1)
    }

    /// Entry (i, j) of a matrix variable as an expression.
    pub fn mat_entry(&self, v: MatVar, i: usize, j: usize) -> ScalarExpr<T> {
        let decl = &self.mats[v.0];
        assert!(i < decl.dim && j < decl.dim, "matrix entry out of range");
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        ScalarExpr::variable(decl.base + tri_index(hi, lo), T::one())
    }

    /// A scalar variable as an expression.
    pub fn scalar_expr(&self, v: ScalarVar) -> ScalarExpr<T> {
        ScalarExpr::variable(self.scalars[v.0].index, T::one())
    }

    /// The full symmetric matrix variable as an affine matrix.
    pub fn mat_as_affine(&self, v: MatVar) -> AffineMat<T> {
        let dim = self.mats[v.0].dim;
        let mut out = AffineMat::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                *out.entry_mut(i, j) = self.mat_entry(v, i, j);
            }
        }
        out
    }

    /// Affine matrix L · V · R' for a symmetric matrix variable V.
    ///
    /// Accumulation runs over the lower triangle of V in a fixed order so
    /// that diagonal sandwiches (R = L) produce exactly symmetric entries.
    pub fn sandwich(&self, l: &DMatrix<T>, v: MatVar, r: &DMatrix<T>) -> AffineMat<T> {
        let decl = &self.mats[v.0];
        let d = decl.dim;
        assert_eq!(l.ncols(), d, "left factor inner dimension");
        assert_eq!(r.ncols(), d, "right factor inner dimension");
        let mut out = AffineMat::zeros(l.nrows(), r.nrows());
        for i in 0..l.nrows() {
            for j in 0..r.nrows() {
                let e = out.entry_mut(i, j);
                for a in 0..d {
                    for b in 0..=a {
                        let idx = decl.base + tri_index(a, b);
                        let coeff = if a == b {
                            l[(i, a)] * r[(j, a)]
                        } else {
                            l[(i, a)] * r[(j, b)] + l[(i, b)] * r[(j, a)]
                        };
                        e.add_term(idx, coeff);
                    }
                }
            }
        }
        out
    }

    /// tr(C · V) as a linear expression (C constant, V symmetric variable).
    pub fn trace_prod(&self, c: &DMatrix<T>, v: MatVar) -> ScalarExpr<T> {
        let decl = &self.mats[v.0];
        let d = decl.dim;
        assert_eq!(c.nrows(), d, "trace weight shape");
        assert_eq!(c.ncols(), d, "trace weight shape");
        let mut e = ScalarExpr::zero();
        for a in 0..d {
            for b in 0..=a {
                let idx = decl.base + tri_index(a, b);
                let coeff = if a == b {
                    c[(a, a)]
                } else {
                    c[(a, b)] + c[(b, a)]
                };
                e.add_term(idx, coeff);
            }
        }
        e
    }

    /// Set the (affine) objective to minimize.
    pub fn set_objective(&mut self, objective: ScalarExpr<T>) {
        self.objective = objective;
    }

    /// Register an affine LMI constraint `expr ⪰ 0`.
    pub fn add_lmi(&mut self, label: &str, expr: AffineMat<T>) -> Result<()> {
        if expr.rows() != expr.cols() {
            return Err(Error::MalformedProgram(format!(
                "LMI `{label}` is {}x{}, not square",
                expr.rows(),
                expr.cols()
            )));
        }
        if !expr.is_symmetric() {
            return Err(Error::MalformedProgram(format!(
                "LMI `{label}` is not symmetric"
            )));
        }
        if let Some(max_idx) = expr.max_var_index() {
            if max_idx >= self.num_vars {
                return Err(Error::MalformedProgram(format!(
                    "LMI `{label}` references undeclared variable index {max_idx}"
                )));
            }
        }
        self.lmis.push((label.to_string(), expr));
        Ok(())
    }

    pub fn num_lmis(&self) -> usize {
        self.lmis.len()
    }

    /// Dimension of the `idx`-th declared LMI.
    pub fn lmi_dim(&self, idx: usize) -> usize {
        self.lmis[idx].1.rows()
    }

    /// Numeric value of the `idx`-th declared LMI at a packed assignment.
    pub fn eval_lmi(&self, idx: usize, packed: &[T]) -> DMatrix<T> {
        self.lmis[idx].1.evaluate(packed)
    }

    /// Objective value at a packed assignment.
    pub fn eval_objective(&self, packed: &[T]) -> T {
        self.objective.evaluate(packed)
    }

    fn compile(&self) -> Result<Compiled<T>> {
        let mut cost = nalgebra::DVector::zeros(self.num_vars);
        for &(i, coeff) in self.objective.terms() {
            if i >= self.num_vars {
                return Err(Error::MalformedProgram(
                    "objective references undeclared variable".to_string(),
                ));
            }
            cost[i] = coeff;
        }

        let mut blocks = Vec::new();
        for (_, expr) in &self.lmis {
            blocks.push(block_from_affine(expr));
        }
        // built-in cones
        for decl in &self.mats {
            if !decl.psd {
                continue;
            }
            let d = decl.dim;
            let mut terms = Vec::new();
            for a in 0..d {
                for b in 0..=a {
                    let mut f = DMatrix::zeros(d, d);
                    f[(a, b)] = T::one();
                    f[(b, a)] = T::one();
                    terms.push((decl.base + tri_index(a, b), f));
                }
            }
            blocks.push(Block {
                dim: d,
                f0: DMatrix::zeros(d, d),
                terms,
            });
        }
        for decl in &self.scalars {
            if !decl.nonneg {
                continue;
            }
            blocks.push(Block {
                dim: 1,
                f0: DMatrix::zeros(1, 1),
                terms: vec![(decl.index, DMatrix::identity(1, 1))],
            });
        }

        // every variable must appear in at least one block, otherwise the
        // Schur complement is singular
        let mut used = vec![false; self.num_vars];
        for b in &blocks {
            for (i, _) in &b.terms {
                used[*i] = true;
            }
        }
        if let Some(idx) = used.iter().position(|u| !u) {
            return Err(Error::MalformedProgram(format!(
                "variable `{}` does not appear in any constraint",
                self.var_name(idx)
            )));
        }

        Ok(Compiled {
            num_vars: self.num_vars,
            cost,
            blocks,
        })
    }

    fn var_name(&self, packed_idx: usize) -> String {
        for decl in &self.mats {
            let count = decl.dim * (decl.dim + 1) / 2;
            if packed_idx >= decl.base && packed_idx < decl.base + count {
                return format!("{}[{}]", decl.name, packed_idx - decl.base);
            }
        }
        for decl in &self.scalars {
            if decl.index == packed_idx {
                return decl.name.clone();
            }
        }
        format!("#{packed_idx}")
    }

    fn unpack(&self, x: &[T]) -> BTreeMap<String, VarValue<T>> {
        let mut out = BTreeMap::new();
        for decl in &self.mats {
            let mut m = DMatrix::zeros(decl.dim, decl.dim);
            for i in 0..decl.dim {
                for j in 0..=i {
                    let v = x[decl.base + tri_index(i, j)];
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            out.insert(decl.name.clone(), VarValue::Matrix(m));
        }
        for decl in &self.scalars {
            out.insert(decl.name.clone(), VarValue::Scalar(x[decl.index]));
        }
        out
    }

    /// Matrix variable value from a solution.
    pub fn matrix_value(&self, sol: &ConicSolution<T>, v: MatVar) -> Option<DMatrix<T>> {
        let decl = &self.mats[v.0];
        match sol.assignments.get(&decl.name) {
            Some(VarValue::Matrix(m)) => Some(m.clone()),
            _ => None,
        }
    }

    /// Scalar variable value from a solution.
    pub fn scalar_value(&self, sol: &ConicSolution<T>, v: ScalarVar) -> Option<T> {
        let decl = &self.scalars[v.0];
        match sol.assignments.get(&decl.name) {
            Some(VarValue::Scalar(s)) => Some(*s),
            _ => None,
        }
    }

    /// Solve the program.
    ///
    /// An `Optimal` result is primal-feasible within `feas_tol` — re-checked
    /// here by eigenvalue evaluation of every LMI, independent of the solver
    /// status — and optimal within `opt_tol` relative duality gap.
    pub fn solve(&self, opts: &SolveOptions<T>) -> Result<ConicSolution<T>> {
        let compiled = self.compile()?;
        let params = IpmParams {
            feas_tol: opts.feas_tol * real::<T>(0.1),
            gap_tol: opts.opt_tol,
            max_iters: opts.max_iters,
        };
        let outcome = solve_ipm(&compiled, &params);

        if outcome.status == IpmStatus::Converged {
            let packed: Vec<T> = outcome.x.iter().cloned().collect();
            // independent feasibility certificate
            let mut worst = T::zero();
            for idx in 0..self.lmis.len() {
                let g = self.eval_lmi(idx, &packed);
                worst = worst.min(min_eig(&g));
            }
            for decl in &self.mats {
                if decl.psd {
                    let m = match self.unpack(&packed).remove(&decl.name) {
                        Some(VarValue::Matrix(m)) => m,
                        _ => unreachable!(),
                    };
                    worst = worst.min(min_eig(&m));
                }
            }
            for decl in &self.scalars {
                if decl.nonneg {
                    worst = worst.min(packed[decl.index]);
                }
            }
            if worst < -opts.feas_tol {
                return Ok(ConicSolution {
                    status: SolveStatus::NumericalTrouble,
                    objective_value: None,
                    assignments: BTreeMap::new(),
                    packed: None,
                });
            }
            let objective_value = self.eval_objective(&packed);
            return Ok(ConicSolution {
                status: SolveStatus::Optimal,
                objective_value: Some(objective_value),
                assignments: self.unpack(&packed),
                packed: Some(packed),
            });
        }

        // did not converge: classify via a strictly feasible phase-I problem
        //   max s  s.t.  G_b(x) − s I ⪰ 0 ∀b,  s ≤ 1
        let mut phase1 = compiled.clone();
        let s_idx = phase1.num_vars;
        phase1.num_vars += 1;
        phase1.cost = nalgebra::DVector::zeros(phase1.num_vars);
        phase1.cost[s_idx] = -T::one();
        for b in phase1.blocks.iter_mut() {
            let d = b.dim;
            b.terms.push((s_idx, -DMatrix::<T>::identity(d, d)));
        }
        phase1.blocks.push(Block {
            dim: 1,
            f0: DMatrix::identity(1, 1),
            terms: vec![(s_idx, -DMatrix::<T>::identity(1, 1))],
        });
        let p1 = solve_ipm(&phase1, &params);
        let status = if p1.status == IpmStatus::Converged {
            let s_star = p1.x[s_idx];
            if s_star < -opts.feas_tol {
                SolveStatus::Infeasible
            } else {
                SolveStatus::NumericalTrouble
            }
        } else {
            SolveStatus::NumericalTrouble
        };
        Ok(ConicSolution {
            status,
            objective_value: None,
            assignments: BTreeMap::new(),
            packed: None,
        })
    }

    /// Dump in the sparse SDPA text format, for cross-checking against
    /// external solvers.
    ///
    /// The emitted problem is `min c'x  s.t.  Σ_i x_i F_i − F0 ⪰ 0` per
    /// block, i.e. our constant blocks are negated on output. Built-in PSD
    /// and nonnegativity cones appear as additional blocks after the
    /// declared LMIs.
    pub fn dump_sdpa(&self) -> Result<String> {
        let compiled = self.compile()?;
        let mut out = String::new();
        let _ = writeln!(out, "{}", compiled.num_vars);
        let _ = writeln!(out, "{}", compiled.blocks.len());
        let dims: Vec<String> = compiled
            .blocks
            .iter()
            .map(|b| b.dim.to_string())
            .collect();
        let _ = writeln!(out, "{}", dims.join(" "));
        let costs: Vec<String> = compiled
            .cost
            .iter()
            .map(|c| format!("{}", to_f64(*c)))
            .collect();
        let _ = writeln!(out, "{}", costs.join(" "));
        for (bi, b) in compiled.blocks.iter().enumerate() {
            // F0 (negated per the SDPA convention)
            for i in 0..b.dim {
                for j in i..b.dim {
                    let v = -b.f0[(i, j)];
                    if v != T::zero() {
                        let _ = writeln!(out, "0 {} {} {} {}", bi + 1, i + 1, j + 1, to_f64(v));
                    }
                }
            }
            for (vi, f) in &b.terms {
                for i in 0..b.dim {
                    for j in i..b.dim {
                        let v = f[(i, j)];
                        if v != T::zero() {
                            let _ = writeln!(
                                out,
                                "{} {} {} {} {}",
                                vi + 1,
                                bi + 1,
                                i + 1,
                                j + 1,
                                to_f64(v)
                            );
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn block_from_affine<T: Scalar>(expr: &AffineMat<T>) -> Block<T> {
    let d = expr.rows();
    let mut f0 = DMatrix::zeros(d, d);
    let mut terms: BTreeMap<usize, DMatrix<T>> = BTreeMap::new();
    for i in 0..d {
        for j in 0..d {
            let e = expr.entry(i, j);
            f0[(i, j)] = e.constant_part();
            for &(vi, coeff) in e.terms() {
                terms
                    .entry(vi)
                    .or_insert_with(|| DMatrix::zeros(d, d))[(i, j)] = coeff;
            }
        }
    }
    Block {
        dim: d,
        f0,
        terms: terms.into_iter().collect(),
    }
}
