//! Bayesian least-squares parameter estimation and construction of the
//! ellipsoidal / spectral credibility regions from trajectory data.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gamma::gamma_p;
use crate::linalg::{max_eig, min_eig, symmetrize, vec_mat};
use crate::scalar::{real, to_f64, Scalar};
use crate::simulation::Trajectory;

/// Transition data aggregated from one or more trajectories.
///
/// Contiguous segments are kept so that the trajectory structure survives a
/// round trip through the CSV interchange format.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset<T: Scalar> {
    segments: Vec<Segment<T>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Segment<T: Scalar> {
    states: Vec<DVector<T>>,
    inputs: Vec<DVector<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new() -> Self {
        Dataset { segments: Vec::new() }
    }

    pub fn from_trajectory(traj: &Trajectory<T>) -> Self {
        let mut d = Dataset::new();
        d.push_trajectory(traj);
        d
    }

    /// Append a trajectory as a new contiguous segment.
    pub fn push_trajectory(&mut self, traj: &Trajectory<T>) {
        if traj.num_transitions() == 0 {
            return;
        }
        self.segments.push(Segment {
            states: traj.states.clone(),
            inputs: traj.inputs.clone(),
        });
    }

    /// Merge the records of `other` into self.
    pub fn union(&mut self, other: &Dataset<T>) {
        self.segments.extend(other.segments.iter().cloned());
    }

    /// Number of (x, u, x') transition triples.
    pub fn len(&self) -> usize {
        self.segments
            .iter()
            .map(|s| s.inputs.len().min(s.states.len().saturating_sub(1)))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Iterate all transition triples (x_t, u_t, x_{t+1}).
    pub fn triples(&self) -> impl Iterator<Item = (&DVector<T>, &DVector<T>, &DVector<T>)> {
        self.segments.iter().flat_map(|s| {
            let n = s.inputs.len().min(s.states.len().saturating_sub(1));
            (0..n).map(move |t| (&s.states[t], &s.inputs[t], &s.states[t + 1]))
        })
    }

    /// State/input dimensions, if the dataset is nonempty.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.segments
            .first()
            .map(|s| (s.states[0].len(), s.inputs[0].len()))
    }

    fn check_consistency(&self) -> Result<()> {
        let Some((n_x, n_u)) = self.dims() else {
            return Ok(());
        };
        for s in &self.segments {
            if s.states.iter().any(|x| x.len() != n_x) || s.inputs.iter().any(|u| u.len() != n_u) {
                return Err(Error::dim("dataset mixes dimensions".to_string()));
            }
        }
        Ok(())
    }

    /// Write in the CSV interchange format: header `t,x0..,u0..`, one row per
    /// time step, blank line between trajectories; the final state of each
    /// trajectory has empty input fields.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        self.check_consistency()?;
        let (n_x, n_u) = self.dims().unwrap_or((0, 0));
        let mut header = vec!["t".to_string()];
        header.extend((0..n_x).map(|i| format!("x{i}")));
        header.extend((0..n_u).map(|i| format!("u{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (si, seg) in self.segments.iter().enumerate() {
            if si > 0 {
                writeln!(w)?;
            }
            for (t, x) in seg.states.iter().enumerate() {
                let mut row = vec![t.to_string()];
                row.extend(x.iter().map(|v| format!("{}", to_f64(*v))));
                if t < seg.inputs.len() {
                    row.extend(seg.inputs[t].iter().map(|v| format!("{}", to_f64(*v))));
                } else {
                    row.extend(std::iter::repeat(String::new()).take(n_u));
                }
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }

    /// Parse the CSV interchange format produced by [`Dataset::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, line)) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Ok(Dataset::new()),
            }
        };
        let cols: Vec<&str> = header.trim().split(',').collect();
        let n_x = cols.iter().filter(|c| c.starts_with('x')).count();
        let n_u = cols.iter().filter(|c| c.starts_with('u')).count();
        if cols.first() != Some(&"t") || n_x == 0 || 1 + n_x + n_u != cols.len() {
            return Err(Error::DatasetParse {
                line: 1,
                message: format!("unrecognized header `{header}`"),
            });
        }

        let mut dataset = Dataset::new();
        let mut states: Vec<DVector<T>> = Vec::new();
        let mut inputs: Vec<DVector<T>> = Vec::new();
        let mut flush = |states: &mut Vec<DVector<T>>, inputs: &mut Vec<DVector<T>>| {
            if !states.is_empty() {
                dataset.segments.push(Segment {
                    states: std::mem::take(states),
                    inputs: std::mem::take(inputs),
                });
            }
        };
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                flush(&mut states, &mut inputs);
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 1 + n_x + n_u {
                return Err(Error::DatasetParse {
                    line: lineno,
                    message: format!("expected {} fields, got {}", 1 + n_x + n_u, fields.len()),
                });
            }
            let parse = |s: &str| -> Result<T> {
                s.parse::<f64>()
                    .map(real::<T>)
                    .map_err(|e| Error::DatasetParse {
                        line: lineno,
                        message: format!("bad number `{s}`: {e}"),
                    })
            };
            let x = DVector::from_vec(
                fields[1..1 + n_x]
                    .iter()
                    .map(|s| parse(s))
                    .collect::<Result<Vec<T>>>()?,
            );
            let u_fields = &fields[1 + n_x..];
            states.push(x);
            if u_fields.iter().all(|f| f.is_empty()) {
                // final state of a trajectory
                continue;
            }
            let u = DVector::from_vec(
                u_fields
                    .iter()
                    .map(|s| parse(s))
                    .collect::<Result<Vec<T>>>()?,
            );
            inputs.push(u);
        }
        flush(&mut states, &mut inputs);
        dataset.check_consistency()?;
        Ok(dataset)
    }

    /// Regressor Gram matrix Σ_t [x;u][x;u]'.
    pub fn gram(&self) -> Result<DMatrix<T>> {
        let (n_x, n_u) = self
            .dims()
            .ok_or_else(|| Error::dim("empty dataset".to_string()))?;
        self.check_consistency()?;
        let d = n_x + n_u;
        let mut gram = DMatrix::zeros(d, d);
        for (x, u, _) in self.triples() {
            let mut z = DVector::zeros(d);
            z.rows_mut(0, n_x).copy_from(x);
            z.rows_mut(n_x, n_u).copy_from(u);
            gram += &z * z.transpose();
        }
        Ok(gram)
    }
}

/// Gaussian posterior over θ = vec([A B]) under a flat prior.
#[derive(Debug, Clone)]
pub struct Posterior<T: Scalar> {
    mu_theta: DVector<T>,
    precision: DMatrix<T>,
    n_x: usize,
    n_u: usize,
}

impl<T: Scalar> Posterior<T> {
    pub fn mean(&self) -> &DVector<T> {
        &self.mu_theta
    }

    /// Posterior precision Σ_θ^{-1}.
    pub fn precision(&self) -> &DMatrix<T> {
        &self.precision
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_x, self.n_u)
    }

    /// Reshape the mean into the nominal estimates (Â, B̂).
    pub fn nominal(&self) -> (DMatrix<T>, DMatrix<T>) {
        let m = DMatrix::from_column_slice(self.n_x, self.n_x + self.n_u, self.mu_theta.as_slice());
        let a = m.columns(0, self.n_x).into_owned();
        let b = m.columns(self.n_x, self.n_u).into_owned();
        (a, b)
    }
}

/// Nominal estimates plus the spectral uncertainty matrix D of the region
/// { (A,B) : X' D X ⪯ I, X = [Â−A, B̂−B]' }.
#[derive(Debug, Clone)]
pub struct UncertainModel<T: Scalar> {
    pub a_hat: DMatrix<T>,
    pub b_hat: DMatrix<T>,
    pub d: DMatrix<T>,
    pub delta: T,
    pub c_delta: T,
}

impl<T: Scalar> UncertainModel<T> {
    pub fn new(
        a_hat: DMatrix<T>,
        b_hat: DMatrix<T>,
        d: DMatrix<T>,
        delta: T,
        c_delta: T,
    ) -> Result<Self> {
        let n_x = a_hat.nrows();
        let n_u = b_hat.ncols();
        if !a_hat.is_square() || b_hat.nrows() != n_x {
            return Err(Error::dim("nominal estimates misshaped".to_string()));
        }
        if d.nrows() != n_x + n_u || !d.is_square() {
            return Err(Error::dim(format!(
                "D must be {0}x{0}",
                n_x + n_u
            )));
        }
        let d = symmetrize(&d);
        let me = min_eig(&d);
        if me < -real::<T>(1e-9) {
            return Err(Error::InvalidCovariance {
                what: "uncertainty matrix D".into(),
                min_eig: to_f64(me),
            });
        }
        if c_delta <= T::zero() {
            return Err(Error::dim("c_delta must be positive".to_string()));
        }
        Ok(UncertainModel {
            a_hat,
            b_hat,
            d,
            delta,
            c_delta,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_hat.ncols()
    }

    /// Same nominal estimates with a replacement uncertainty matrix.
    pub fn with_d(&self, d: DMatrix<T>) -> Result<Self> {
        UncertainModel::new(
            self.a_hat.clone(),
            self.b_hat.clone(),
            d,
            self.delta,
            self.c_delta,
        )
    }
}

/// Ordinary least squares posterior over θ = vec([A B]).
///
/// The Gram matrix must be well conditioned (min eig > 1e-10 × max eig);
/// otherwise the data does not excite every direction and the flat-prior
/// posterior is improper.
pub fn ols_posterior<T: Scalar>(data: &Dataset<T>, sigma_w: T) -> Result<Posterior<T>> {
    let (n_x, n_u) = data
        .dims()
        .filter(|_| !data.is_empty())
        .ok_or_else(|| Error::RankDeficient { ratio: 0.0 })?;
    let d = n_x + n_u;
    let gram = data.gram()?;
    let max_e = max_eig(&gram);
    let min_e = min_eig(&gram);
    let ratio = if max_e > T::zero() { min_e / max_e } else { T::zero() };
    if ratio <= real::<T>(1e-10) {
        return Err(Error::RankDeficient {
            ratio: to_f64(ratio),
        });
    }

    // Cross moments Σ_t x_{t+1} [x;u]'  (n_x × d)
    let mut cross = DMatrix::<T>::zeros(n_x, d);
    for (x, u, xn) in data.triples() {
        let mut z = DVector::zeros(d);
        z.rows_mut(0, n_x).copy_from(x);
        z.rows_mut(n_x, n_u).copy_from(u);
        cross += xn * z.transpose();
    }
    // [Â B̂] = cross · Gram^{-1}; solve Gram · M' = cross'
    let chol = gram
        .clone()
        .cholesky()
        .ok_or(Error::RankDeficient {
            ratio: to_f64(ratio),
        })?;
    let ab = chol.solve(&cross.transpose()).transpose();
    let mu_theta = vec_mat(&ab);

    let inv_var = T::one() / (sigma_w * sigma_w);
    let precision = gram.kronecker(&DMatrix::identity(n_x, n_x)) * inv_var;
    Ok(Posterior {
        mu_theta,
        precision,
        n_x,
        n_u,
    })
}

/// Quantile of the chi-square distribution: the value c with
/// P(χ²_dof ≤ c) = 1 − delta, found by bisection on the regularized lower
/// incomplete gamma function to 1e-10 absolute tolerance.
pub fn chi2_quantile<T: Scalar>(dof: usize, delta: T) -> T {
    assert!(dof >= 1, "dof must be positive");
    assert!(
        delta > T::zero() && delta < T::one(),
        "delta must lie in (0,1)"
    );
    let target = T::one() - delta;
    let a = real::<T>(dof as f64 / 2.0);
    let cdf = |c: T| gamma_p(a, c / real::<T>(2.0));

    let mut hi = real::<T>(dof as f64 + 10.0);
    while cdf(hi) < target {
        hi *= real::<T>(2.0);
    }
    let mut lo = T::zero();
    let tol = real::<T>(1e-10);
    loop {
        let mid = (lo + hi) * real::<T>(0.5);
        if hi - lo <= tol || mid == lo || mid == hi {
            return mid;
        }
        if cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Build the spectral uncertainty model from data:
/// D = Gram / (σ_w² c_δ) with c_δ the chi-square quantile at the parameter
/// dimension n_x² + n_x·n_u.
pub fn spectral_model<T: Scalar>(data: &Dataset<T>, sigma_w: T, delta: T) -> Result<UncertainModel<T>> {
    let posterior = ols_posterior(data, sigma_w)?;
    let (n_x, n_u) = posterior.dims();
    let c_delta = chi2_quantile(n_x * n_x + n_x * n_u, delta);
    let gram = data.gram()?;
    let d = gram / (sigma_w * sigma_w * c_delta);
    let (a_hat, b_hat) = posterior.nominal();
    UncertainModel::new(a_hat, b_hat, d, delta, c_delta)
}

/// Membership test for the ellipsoidal credibility region:
/// (θ − μ)' Σ_θ^{-1} (θ − μ) ≤ c_δ.
pub fn ellipsoid_contains<T: Scalar>(post: &Posterior<T>, theta: &DVector<T>, c_delta: T) -> bool {
    assert_eq!(theta.len(), post.mu_theta.len(), "parameter length mismatch");
    let diff = theta - &post.mu_theta;
    let qf = (diff.transpose() * &post.precision * &diff)[(0, 0)];
    qf <= c_delta
}

/// Membership test for the spectral region: λ_max(X' D X) ≤ 1 + 1e-9 with
/// X = [Â−A, B̂−B]'.
pub fn spectral_contains<T: Scalar>(model: &UncertainModel<T>, a: &DMatrix<T>, b: &DMatrix<T>) -> bool {
    assert_eq!(a.shape(), model.a_hat.shape(), "A shape mismatch");
    assert_eq!(b.shape(), model.b_hat.shape(), "B shape mismatch");
    let x = error_matrix(model, a, b);
    let m = x.transpose() * &model.d * &x;
    max_eig(&m) <= T::one() + real::<T>(1e-9)
}

/// X = [Â − A, B̂ − B]' of size (n_x+n_u) × n_x.
pub fn error_matrix<T: Scalar>(
    model: &UncertainModel<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> DMatrix<T> {
    let da = &model.a_hat - a;
    let db = &model.b_hat - b;
    let mut x = DMatrix::zeros(model.state_dim() + model.input_dim(), model.state_dim());
    x.view_mut((0, 0), (model.state_dim(), model.state_dim()))
        .copy_from(&da.transpose());
    x.view_mut((model.state_dim(), 0), (model.input_dim(), model.state_dim()))
        .copy_from(&db.transpose());
    x
}

/// Scalar certainty summary: λ_min(D), i.e. 1/λ_max(D^{-1}); zero when D is
/// singular (infinite uncertainty in some direction).
pub fn information<T: Scalar>(model: &UncertainModel<T>) -> T {
    min_eig(&model.d).max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NoiseStreams;
    use crate::simulation::{rollout, LinearSystem, Policy};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy_dataset() -> Dataset<f64> {
        // scalar system records {(1,0,0.8),(0,1,0.3)}
        let t1 = Trajectory::new(
            vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.8])],
            vec![DVector::from_vec(vec![0.0])],
        )
        .unwrap();
        let t2 = Trajectory::new(
            vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![0.3])],
            vec![DVector::from_vec(vec![1.0])],
        )
        .unwrap();
        let mut d = Dataset::from_trajectory(&t1);
        d.push_trajectory(&t2);
        d
    }

    #[test]
    fn ols_orthogonal_regressors() {
        let post = ols_posterior(&toy_dataset(), 1.0).unwrap();
        let (a, b) = post.nominal();
        assert_relative_eq!(a[(0, 0)], 0.8, epsilon = 1e-12);
        assert_relative_eq!(b[(0, 0)], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn ols_exact_interpolation_noise_free() {
        let a_true = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.7]);
        let b_true = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = LinearSystem::new(a_true.clone(), b_true.clone(), 0.0).unwrap();
        let p = Policy::new(DMatrix::zeros(1, 2), DMatrix::identity(1, 1)).unwrap();
        let mut streams = NoiseStreams::from_master(5, 0);
        let traj = rollout(&sys, &p, &DVector::from_vec(vec![1.0, -1.0]), 20, &mut streams).unwrap();
        let data = Dataset::from_trajectory(&traj);
        let post = ols_posterior(&data, 1.0).unwrap();
        let (a, b) = post.nominal();
        assert_relative_eq!(a, a_true, epsilon = 1e-8);
        assert_relative_eq!(b, b_true, epsilon = 1e-8);
    }

    #[test]
    fn ols_rejects_rank_deficient_data() {
        // single record cannot excite both state and input directions
        let t = Trajectory::new(
            vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.5])],
            vec![DVector::from_vec(vec![1.0])],
        )
        .unwrap();
        let data = Dataset::from_trajectory(&t);
        assert!(matches!(
            ols_posterior(&data, 1.0),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn precision_is_gram_kronecker_identity() {
        // verified against an elementwise construction on a 2x1 system
        let sys = LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.0, 0.9]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            0.7,
        )
        .unwrap();
        let p = Policy::new(DMatrix::zeros(1, 2), DMatrix::identity(1, 1)).unwrap();
        let mut streams = NoiseStreams::from_master(11, 0);
        let traj = rollout(&sys, &p, &DVector::zeros(2), 30, &mut streams).unwrap();
        let data = Dataset::from_trajectory(&traj);
        let post = ols_posterior(&data, 0.7).unwrap();

        let d = 3usize;
        let n_x = 2usize;
        let mut expected = DMatrix::<f64>::zeros(d * n_x, d * n_x);
        for (x, u, _) in data.triples() {
            let z = DVector::from_vec(vec![x[0], x[1], u[0]]);
            for i in 0..d {
                for j in 0..d {
                    for k in 0..n_x {
                        expected[(i * n_x + k, j * n_x + k)] += z[i] * z[j] / (0.7 * 0.7);
                    }
                }
            }
        }
        assert_relative_eq!(post.precision(), &expected, epsilon = 1e-9);
    }

    #[test]
    fn chi2_dof2_closed_form() {
        // dof = 2 has CDF 1 - exp(-c/2), so the quantile is -2 ln δ
        assert_relative_eq!(chi2_quantile(2, 0.05f64), 5.991_464_547_107_982, epsilon = 1e-9);
        assert_relative_eq!(chi2_quantile(2, 0.5f64), 1.386_294_361_119_890_6, epsilon = 1e-9);
    }

    #[test]
    fn chi2_increasing_in_confidence() {
        let mut prev = 0.0;
        for delta in [0.5, 0.2, 0.1, 0.05, 0.01] {
            let c = chi2_quantile(15, delta);
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn spectral_model_single_record() {
        // one record x = e1, u = 0 with c_δ forced to 1: D = e1 e1' padded
        let t = Trajectory::new(
            vec![DVector::from_vec(vec![1.0, 0.0]), DVector::zeros(2)],
            vec![DVector::from_vec(vec![0.0])],
        )
        .unwrap();
        let data = Dataset::from_trajectory(&t);
        let gram = data.gram().unwrap();
        let d = &gram / (1.0 * 1.0);
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 0)] = 1.0;
        assert_relative_eq!(d, expected, epsilon = 1e-14);
    }

    #[test]
    fn doubling_data_doubles_d() {
        let data = toy_dataset();
        let mut doubled = data.clone();
        doubled.union(&data);
        let m1 = spectral_model(&data, 1.0, 0.1).unwrap();
        let m2 = spectral_model(&doubled, 1.0, 0.1).unwrap();
        assert_relative_eq!(&m2.d, &(&m1.d * 2.0), epsilon = 1e-10);
    }

    #[test]
    fn ellipsoid_membership_cases() {
        let data = toy_dataset();
        let post = ols_posterior(&data, 1.0).unwrap();
        let c_delta = 4.0;
        // center
        assert!(ellipsoid_contains(&post, post.mean(), c_delta));
        // exact boundary: precision is diagonal [1,1] here (Gram = I), so
        // walking sqrt(c)·e1 from the mean lands exactly on it
        let mut theta = post.mean().clone();
        theta[0] += 2.0;
        assert!(ellipsoid_contains(&post, &theta, c_delta));
        // strictly outside
        let mut theta2 = post.mean().clone();
        theta2[0] += (2.0f64 * c_delta).sqrt();
        assert!(!ellipsoid_contains(&post, &theta2, c_delta));
    }

    #[test]
    fn spectral_membership_cases() {
        let model = UncertainModel::new(
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(2, 2),
            0.05,
            1.0,
        )
        .unwrap();
        assert!(spectral_contains(&model, &DMatrix::zeros(1, 1), &DMatrix::zeros(1, 1)));
        let far = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert!(!spectral_contains(&model, &far, &DMatrix::zeros(1, 1)));
        let edge = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(spectral_contains(&model, &edge, &DMatrix::zeros(1, 1)));
    }

    #[test]
    fn information_values() {
        let mk = |d: DMatrix<f64>| {
            UncertainModel::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), d, 0.05, 1.0).unwrap()
        };
        assert_relative_eq!(
            information(&mk(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])))),
            2.0
        );
        assert_relative_eq!(information(&mk(DMatrix::identity(2, 2))), 1.0);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(information(&mk(singular)), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let sys = LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            0.5,
        )
        .unwrap();
        let p = Policy::new(DMatrix::zeros(1, 2), DMatrix::identity(1, 1)).unwrap();
        let mut streams = NoiseStreams::from_master(3, 0);
        let mut data = Dataset::new();
        for _ in 0..3 {
            let traj = rollout(&sys, &p, &DVector::zeros(2), 6, &mut streams).unwrap();
            data.push_trajectory(&traj);
        }
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let parsed = Dataset::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed, data);

        // writing again produces identical bytes
        let mut buf2 = Vec::new();
        parsed.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn csv_rejects_malformed_rows() {
        let text = "t,x0,u0\n0,1.0\n";
        assert!(Dataset::<f64>::read_csv(text.as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn d_is_gram_scaled_by_confidence(delta in 0.01f64..0.9, seed in 0u64..100) {
            let sys = LinearSystem::new(
                DMatrix::from_row_slice(1, 1, &[0.5]),
                DMatrix::from_row_slice(1, 1, &[1.0]),
                0.8,
            ).unwrap();
            let p = Policy::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
            let mut streams = NoiseStreams::from_master(seed, 0);
            let traj = rollout(&sys, &p, &DVector::zeros(1), 15, &mut streams).unwrap();
            let data = Dataset::from_trajectory(&traj);
            let model = spectral_model(&data, 0.8, delta).unwrap();
            let gram = data.gram().unwrap();
            let c = chi2_quantile(2, delta);
            let expected = gram / (0.8 * 0.8 * c);
            let diff = (&model.d - &expected).amax();
            prop_assert!(diff < 1e-10);
        }
    }
}
