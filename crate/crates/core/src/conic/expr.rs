//! Affine expressions over packed decision variables.
//!
//! A [`ScalarExpr`] is `constant + Σ coeff · x_i` over the program's packed
//! variable vector; an [`AffineMat`] is a dense matrix of such expressions.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::scalar::Scalar;

/// Affine scalar expression: constant + Σ terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr<T: Scalar> {
    pub(crate) constant: T,
    /// Sorted by variable index, no duplicates, no zero coefficients.
    pub(crate) terms: Vec<(usize, T)>,
}

impl<T: Scalar> ScalarExpr<T> {
    pub fn zero() -> Self {
        ScalarExpr {
            constant: T::zero(),
            terms: Vec::new(),
        }
    }

    pub fn constant(c: T) -> Self {
        ScalarExpr {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub(crate) fn variable(index: usize, coeff: T) -> Self {
        if coeff == T::zero() {
            return ScalarExpr::zero();
        }
        ScalarExpr {
            constant: T::zero(),
            terms: vec![(index, coeff)],
        }
    }

    pub fn constant_part(&self) -> T {
        self.constant
    }

    pub fn terms(&self) -> &[(usize, T)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.constant == T::zero() && self.terms.is_empty()
    }

    pub(crate) fn add_term(&mut self, index: usize, coeff: T) {
        if coeff == T::zero() {
            return;
        }
        match self.terms.binary_search_by_key(&index, |t| t.0) {
            Ok(pos) => {
                self.terms[pos].1 += coeff;
                if self.terms[pos].1 == T::zero() {
                    self.terms.remove(pos);
                }
            }
            Err(pos) => self.terms.insert(pos, (index, coeff)),
        }
    }

    pub(crate) fn add_assign_expr(&mut self, other: &ScalarExpr<T>) {
        self.constant += other.constant;
        for &(idx, coeff) in &other.terms {
            self.add_term(idx, coeff);
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        if s == T::zero() {
            return ScalarExpr::zero();
        }
        ScalarExpr {
            constant: self.constant * s,
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
        }
    }

    /// Evaluate at a packed assignment.
    pub fn evaluate(&self, x: &[T]) -> T {
        let mut v = self.constant;
        for &(i, c) in &self.terms {
            v += c * x[i];
        }
        v
    }

    pub(crate) fn max_var_index(&self) -> Option<usize> {
        self.terms.last().map(|t| t.0)
    }
}

impl<T: Scalar> Add for ScalarExpr<T> {
    type Output = ScalarExpr<T>;
    fn add(mut self, rhs: ScalarExpr<T>) -> Self::Output {
        self.add_assign_expr(&rhs);
        self
    }
}

impl<T: Scalar> Sub for ScalarExpr<T> {
    type Output = ScalarExpr<T>;
    fn sub(mut self, rhs: ScalarExpr<T>) -> Self::Output {
        self.add_assign_expr(&rhs.scaled(-T::one()));
        self
    }
}

impl<T: Scalar> Neg for ScalarExpr<T> {
    type Output = ScalarExpr<T>;
    fn neg(self) -> Self::Output {
        self.scaled(-T::one())
    }
}

impl<T: Scalar> Mul<T> for ScalarExpr<T> {
    type Output = ScalarExpr<T>;
    fn mul(self, rhs: T) -> Self::Output {
        self.scaled(rhs)
    }
}

/// Dense matrix of affine expressions (row-major).
#[derive(Debug, Clone)]
pub struct AffineMat<T: Scalar> {
    rows: usize,
    cols: usize,
    entries: Vec<ScalarExpr<T>>,
}

impl<T: Scalar> AffineMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        AffineMat {
            rows,
            cols,
            entries: vec![ScalarExpr::zero(); rows * cols],
        }
    }

    pub fn from_const(m: &DMatrix<T>) -> Self {
        let mut out = AffineMat::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.entries[i * m.ncols() + j] = ScalarExpr::constant(m[(i, j)]);
            }
        }
        out
    }

    /// Constant matrix scaled by a scalar expression: entry (i,j) = m_ij · e.
    pub fn const_times_expr(m: &DMatrix<T>, e: &ScalarExpr<T>) -> Self {
        let mut out = AffineMat::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.entries[i * m.ncols() + j] = e.scaled(m[(i, j)]);
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarExpr<T> {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut ScalarExpr<T> {
        &mut self.entries[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut out = AffineMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.entry_mut(j, i) = self.entry(i, j).clone();
            }
        }
        out
    }

    pub fn add(&self, other: &AffineMat<T>) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (e, o) in out.entries.iter_mut().zip(&other.entries) {
            e.add_assign_expr(o);
        }
        out
    }

    pub fn sub(&self, other: &AffineMat<T>) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (e, o) in out.entries.iter_mut().zip(&other.entries) {
            e.add_assign_expr(&o.scaled(-T::one()));
        }
        out
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        for e in out.entries.iter_mut() {
            *e = e.scaled(s);
        }
        out
    }

    /// Copy `block` into self with its (0,0) entry at (r0, c0).
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &AffineMat<T>) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                *self.entry_mut(r0 + i, c0 + j) = block.entry(i, j).clone();
            }
        }
    }

    /// Evaluate every entry at a packed assignment.
    pub fn evaluate(&self, x: &[T]) -> DMatrix<T> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).evaluate(x))
    }

    /// Extract the sub-matrix with corner (r0, c0) and shape (rows, cols).
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> AffineMat<T> {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        let mut out = AffineMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                *out.entry_mut(i, j) = self.entry(r0 + i, c0 + j).clone();
            }
        }
        out
    }

    /// L · Self · R' with constant factors. Self must be square; when it is
    /// structurally symmetric and R = L, the result is structurally
    /// symmetric because the lower triangle is accumulated in a fixed order
    /// with commuted coefficient products.
    pub fn sandwich_const(&self, l: &DMatrix<T>, r: &DMatrix<T>) -> AffineMat<T> {
        assert_eq!(self.rows, self.cols, "sandwich needs a square inner matrix");
        debug_assert!(self.is_symmetric(), "sandwich needs a symmetric inner matrix");
        let d = self.rows;
        assert_eq!(l.ncols(), d);
        assert_eq!(r.ncols(), d);
        let mut out = AffineMat::zeros(l.nrows(), r.nrows());
        for i in 0..l.nrows() {
            for j in 0..r.nrows() {
                let e = out.entry_mut(i, j);
                for a in 0..d {
                    for b in 0..=a {
                        let coeff = if a == b {
                            l[(i, a)] * r[(j, a)]
                        } else {
                            l[(i, a)] * r[(j, b)] + l[(i, b)] * r[(j, a)]
                        };
                        e.add_assign_expr(&self.entry(a, b).scaled(coeff));
                    }
                }
            }
        }
        out
    }

    pub(crate) fn max_var_index(&self) -> Option<usize> {
        self.entries.iter().filter_map(|e| e.max_var_index()).max()
    }

    /// Exact structural symmetry check (used when registering LMIs).
    pub fn is_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in 0..i {
                if self.entry(i, j) != self.entry(j, i) {
                    return false;
                }
            }
        }
        true
    }
}
