//! Dense symmetric-matrix linear algebra.
//!
//! Everything here works on small matrices (n up to a few dozen). The
//! eigen-solver is cyclic Jacobi, which is slow asymptotically but accurate
//! to working precision on every symmetric input.

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, Vector};

/// A matrix counts as negative (positive) definite when its largest
/// (smallest) eigenvalue clears zero by this much.
pub const DEFAULT_DEFINITENESS_TOL: f64 = 1e-8;

/// Largest condition number accepted for the pivot block of a Schur
/// complement.
pub const DEFAULT_MAX_CONDITION: f64 = 1e12;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Real symmetric matrix. The upper triangle is authoritative on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Builds a symmetric matrix by mirroring the upper triangle of `m`.
    pub fn from_upper(mut m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::input(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::input("symmetric matrix must have n >= 1"));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in 0..i {
                m[(i, j)] = m[(j, i)];
            }
        }
        Ok(SymMatrix(m))
    }

    /// Like [`SymMatrix::from_upper`] but rejects inputs whose triangles
    /// disagree by more than `tol` relative to the largest entry.
    pub fn try_new(m: Matrix, tol: f64) -> Result<Self> {
        let scale = m.amax().max(1.0);
        if m.is_square() {
            let n = m.nrows();
            for i in 0..n {
                for j in 0..i {
                    if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                        return Err(Error::input(format!(
                            "matrix is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Self::from_upper(m)
    }

    /// Symmetrizes `(m + mᵀ) / 2`.
    pub fn symmetrize(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::input("cannot symmetrize a non-square matrix"));
        }
        Self::from_upper((m + m.transpose()) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(Matrix::from_diagonal(&Vector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn scale(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.0)
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(*sym_eigenvalues(self)?.last().expect("n >= 1"))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(sym_eigenvalues(self)?[0])
    }

    /// `max eigenvalue < -tol`.
    pub fn is_negative_definite(&self, tol: f64) -> Result<bool> {
        Ok(self.max_eigenvalue()? < -tol)
    }

    /// `min eigenvalue > tol`.
    pub fn is_positive_definite(&self, tol: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? > tol)
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::try_new(matrix_from_rows(&rows)?, 1e-9)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(s: SymMatrix) -> Self {
        s.to_rows()
    }
}

/// Row-major nested vectors to a dense matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Dimension {
            what: "ragged matrix row",
            expected: ncols,
            got: bad.len(),
        });
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors; column `k` pairs with `values[k]`.
    pub vectors: Matrix,
}

/// All eigenvalues of `s`, ascending.
pub fn sym_eigenvalues(s: &SymMatrix) -> Result<Vec<f64>> {
    Ok(sym_eigen(s)?.values)
}

/// Cyclic Jacobi eigen-decomposition.
pub fn sym_eigen(s: &SymMatrix) -> Result<SymEigen> {
    if !s.is_finite() {
        return Err(Error::input("non-finite entry in symmetric matrix"));
    }
    let n = s.dim();
    let mut a = s.as_matrix().clone();
    let mut v = Matrix::identity(n, n);

    let total = a.norm();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= f64::EPSILON * 1e-2 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

/// Lower-triangular `L` with `L·Lᵀ = s`, or `None` when `s` is not
/// positive definite.
pub fn cholesky(s: &SymMatrix) -> Option<Matrix> {
    cholesky_raw(s.as_matrix())
}

/// Cholesky on the lower triangle of a square matrix assumed symmetric.
pub(crate) fn cholesky_raw(a: &Matrix) -> Option<Matrix> {
    let n = a.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Inverse and log-determinant of a positive definite matrix from its
/// Cholesky factor.
pub(crate) fn spd_inverse_logdet(a: &Matrix) -> Option<(Matrix, f64)> {
    let l = cholesky_raw(a)?;
    let n = a.nrows();
    let logdet = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    // L⁻¹ by forward substitution, then A⁻¹ = L⁻ᵀ L⁻¹.
    let mut linv = Matrix::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                s -= l[(i, k)] * linv[(k, c)];
            }
            linv[(i, c)] = s / l[(i, i)];
        }
    }
    let inv = linv.transpose() * &linv;
    Some((inv, logdet))
}

/// Solves `a·x = b` for positive definite `a`.
pub(crate) fn spd_solve(a: &Matrix, b: &Vector) -> Option<Vector> {
    let l = cholesky_raw(a)?;
    let n = a.nrows();
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = Vector::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Some(x)
}

/// Symmetric 2×2 block arrangement `[[A, B], [Bᵀ, C]]`.
#[derive(Clone, Debug)]
pub struct PartitionedMatrix {
    pub a: SymMatrix,
    pub b: Matrix,
    pub c: SymMatrix,
}

impl PartitionedMatrix {
    pub fn new(a: SymMatrix, b: Matrix, c: SymMatrix) -> Result<Self> {
        if b.nrows() != a.dim() {
            return Err(Error::Dimension {
                what: "coupling block rows",
                expected: a.dim(),
                got: b.nrows(),
            });
        }
        if b.ncols() != c.dim() {
            return Err(Error::Dimension {
                what: "coupling block columns",
                expected: c.dim(),
                got: b.ncols(),
            });
        }
        Ok(PartitionedMatrix { a, b, c })
    }

    /// Splits `s` after the first `k` rows and columns.
    pub fn split(s: &SymMatrix, k: usize) -> Result<Self> {
        let n = s.dim();
        if k == 0 || k >= n {
            return Err(Error::input(format!("split point {k} outside 1..{n}")));
        }
        let m = s.as_matrix();
        Self::new(
            SymMatrix::from_upper(m.view((0, 0), (k, k)).into_owned())?,
            m.view((0, k), (k, n - k)).into_owned(),
            SymMatrix::from_upper(m.view((k, k), (n - k, n - k)).into_owned())?,
        )
    }

    pub fn to_sym(&self) -> SymMatrix {
        let (p, q) = (self.a.dim(), self.c.dim());
        let mut m = Matrix::zeros(p + q, p + q);
        m.view_mut((0, 0), (p, p)).copy_from(self.a.as_matrix());
        m.view_mut((0, p), (p, q)).copy_from(&self.b);
        m.view_mut((p, 0), (q, p)).copy_from(&self.b.transpose());
        m.view_mut((p, p), (q, q)).copy_from(self.c.as_matrix());
        SymMatrix(m)
    }

    /// `A − B·C⁻¹·Bᵀ`, with the default conditioning threshold.
    pub fn schur_reduce(&self) -> Result<SymMatrix> {
        self.schur_reduce_with(DEFAULT_MAX_CONDITION)
    }

    pub fn schur_reduce_with(&self, max_condition: f64) -> Result<SymMatrix> {
        let eig = sym_eigen(&self.c)?;
        let largest = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let smallest = eig.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let condition = if smallest == 0.0 {
            f64::INFINITY
        } else {
            largest / smallest
        };
        if !(condition <= max_condition) {
            return Err(Error::Singular { condition });
        }
        let inv_diag = Vector::from_iterator(eig.values.len(), eig.values.iter().map(|v| 1.0 / v));
        let c_inv = &eig.vectors * Matrix::from_diagonal(&inv_diag) * eig.vectors.transpose();
        let reduced = self.a.as_matrix() - &self.b * c_inv * self.b.transpose();
        SymMatrix::symmetrize(&reduced)
    }
}

/// Convenience wrapper for [`PartitionedMatrix::schur_reduce`].
pub fn schur_reduce(p: &PartitionedMatrix) -> Result<SymMatrix> {
    p.schur_reduce()
}

/// Length of `svec` for an `n×n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Isometric vectorization: upper triangle row by row, off-diagonal entries
/// scaled by √2 so that `⟨svec(S), svec(T)⟩ = tr(S·T)`.
pub fn svec(s: &SymMatrix) -> Vector {
    svec_raw(s.as_matrix())
}

pub(crate) fn svec_raw(m: &Matrix) -> Vector {
    let n = m.nrows();
    let mut out = Vector::zeros(svec_len(n));
    let mut k = 0;
    for i in 0..n {
        out[k] = m[(i, i)];
        k += 1;
        for j in (i + 1)..n {
            out[k] = std::f64::consts::SQRT_2 * m[(i, j)];
            k += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64]) -> Result<SymMatrix> {
    let len = v.len();
    let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if n == 0 || svec_len(n) != len {
        return Err(Error::input(format!(
            "svec length {len} is not n(n+1)/2 for any n >= 1"
        )));
    }
    let mut m = Matrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        m[(i, i)] = v[k];
        k += 1;
        for j in (i + 1)..n {
            let x = v[k] / std::f64::consts::SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    Ok(SymMatrix(m))
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn random_sym(rng: &mut impl Rng, n: usize) -> SymMatrix {
        let m = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::symmetrize(&m).unwrap()
    }

    /// Reference eigenvalues from nalgebra's QR-based solver.
    pub fn oracle_eigenvalues(s: &SymMatrix) -> Vec<f64> {
        let mut v: Vec<f64> = s
            .as_matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Matrix {
        let m = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        m.qr().q()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn eigenvalues_of_simple_matrices() {
        assert_close(&sym_eigenvalues(&SymMatrix::identity(3)).unwrap(), &[1.0; 3], 1e-15);
        assert_close(
            &sym_eigenvalues(&SymMatrix::from_diagonal(&[5.0, -2.0])).unwrap(),
            &[-2.0, 5.0],
            1e-15,
        );
    }

    #[test]
    fn eigenvalues_of_reported_lyapunov_matrix() {
        let p = SymMatrix::try_from(vec![vec![27.9685, -7.0275], vec![-7.0275, 18.5635]]).unwrap();
        // Closed form: (tr ± sqrt(tr² − 4 det)) / 2.
        let tr: f64 = 27.9685 + 18.5635;
        let det = 27.9685 * 18.5635 - 7.0275 * 7.0275;
        let disc = (tr * tr - 4.0 * det).sqrt();
        let expected = [(tr - disc) / 2.0, (tr + disc) / 2.0];
        let got = sym_eigenvalues(&p).unwrap();
        assert_close(&got, &expected, 1e-12);
        assert!((got[0] - 14.81).abs() < 0.01 && (got[1] - 31.72).abs() < 0.01);
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let s = SymMatrix::from_diagonal(&[1.0, f64::NAN]);
        assert!(matches!(sym_eigenvalues(&s), Err(Error::Input(_))));
    }

    #[test]
    fn from_upper_mirrors_and_try_new_rejects_asymmetry() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 9.0, 3.0]);
        let s = SymMatrix::from_upper(m.clone()).unwrap();
        assert_eq!(s.get(1, 0), 2.0);
        assert!(SymMatrix::try_new(m, 1e-9).is_err());
        assert!(SymMatrix::from_upper(Matrix::zeros(2, 3)).is_err());
        assert!(SymMatrix::from_upper(Matrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn cholesky_examples() {
        let l = cholesky(&SymMatrix::identity(2)).unwrap();
        assert_eq!(l, Matrix::identity(2, 2));
        let l = cholesky(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert_eq!(l, Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        let indefinite = SymMatrix::try_from(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(cholesky(&indefinite).is_none());
    }

    #[test]
    fn schur_examples() {
        let a = SymMatrix::try_from(vec![vec![1.0, 0.5], vec![0.5, 2.0]]).unwrap();
        let c = SymMatrix::from_diagonal(&[-3.0, -1.0]);
        let p = PartitionedMatrix::new(a.clone(), Matrix::zeros(2, 2), c).unwrap();
        assert_eq!(schur_reduce(&p).unwrap(), a);

        let s = SymMatrix::try_from(vec![vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let p = PartitionedMatrix::split(&s, 1).unwrap();
        assert!((schur_reduce(&p).unwrap().get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn schur_rejects_singular_pivot() {
        let s = SymMatrix::try_from(vec![vec![2.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = PartitionedMatrix::split(&s, 1).unwrap();
        assert!(matches!(p.schur_reduce(), Err(Error::Singular { .. })));
        let s = SymMatrix::try_from(vec![vec![2.0, 1.0], vec![1.0, 1e-14]]).unwrap();
        let p = PartitionedMatrix::split(&s, 1).unwrap();
        assert!(p.schur_reduce_with(1e12).is_ok());
        let c = SymMatrix::from_diagonal(&[1.0, 1e-14]);
        let p = PartitionedMatrix::new(SymMatrix::identity(1), Matrix::zeros(1, 2), c).unwrap();
        match p.schur_reduce() {
            Err(Error::Singular { condition }) => assert!(condition > 1e13),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn schur_negative_definite_equivalence_random_4x4() {
        let mut r = rng(7);
        let mut both = [0usize; 2];
        for _ in 0..500 {
            let s = random_sym(&mut r, 4).scale(2.0).sub(&SymMatrix::identity(4).scale(0.8));
            let p = PartitionedMatrix::split(&s, 2).unwrap();
            let c_neg = *oracle_eigenvalues(&p.c).last().unwrap() < 0.0;
            if !c_neg {
                continue;
            }
            let full_neg = *oracle_eigenvalues(&s).last().unwrap() < 0.0;
            let red_neg = *oracle_eigenvalues(&schur_reduce(&p).unwrap()).last().unwrap() < 0.0;
            assert_eq!(full_neg, red_neg);
            both[full_neg as usize] += 1;
        }
        assert!(both[0] > 10 && both[1] > 10, "{both:?}");
    }

    #[test]
    fn svec_examples() {
        assert_eq!(svec(&SymMatrix::identity(2)).as_slice(), &[1.0, 0.0, 1.0]);
        assert!(smat(&[1.0, 2.0]).is_err());
        assert!(smat(&[]).is_err());
    }

    proptest! {
        #[test]
        fn svec_round_trip_and_inner_product(seed in any::<u64>(), n in 1usize..=12) {
            let mut r = rng(seed);
            let s = random_sym(&mut r, n);
            let t = random_sym(&mut r, n);
            let back = smat(svec(&s).as_slice()).unwrap();
            prop_assert!((back.as_matrix() - s.as_matrix()).amax() <= 1e-12);
            let ip = svec(&s).dot(&svec(&t));
            let tr = (s.as_matrix() * t.as_matrix()).trace();
            prop_assert!((ip - tr).abs() <= 1e-10);
        }

        #[test]
        fn jacobi_matches_oracle(seed in any::<u64>(), n in 1usize..=10) {
            let s = random_sym(&mut rng(seed), n).scale(10.0);
            let got = sym_eigenvalues(&s).unwrap();
            let want = oracle_eigenvalues(&s);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-10, "{:?} vs {:?}", got, want);
            }
        }

        #[test]
        fn eigenvectors_reconstruct(seed in any::<u64>(), n in 1usize..=8) {
            let s = random_sym(&mut rng(seed), n);
            let e = sym_eigen(&s).unwrap();
            let d = Matrix::from_diagonal(&Vector::from_vec(e.values.clone()));
            let rebuilt = &e.vectors * d * e.vectors.transpose();
            prop_assert!((rebuilt - s.as_matrix()).amax() <= 1e-12);
        }

        #[test]
        fn eigenvalues_invariant_under_orthogonal_similarity(seed in any::<u64>(), n in 1usize..=8) {
            let mut r = rng(seed);
            let s = random_sym(&mut r, n).scale(5.0);
            let q = random_orthogonal(&mut r, n);
            let t = SymMatrix::symmetrize(&(&q * s.as_matrix() * q.transpose())).unwrap();
            let a = sym_eigenvalues(&s).unwrap();
            let b = sym_eigenvalues(&t).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn cholesky_iff_positive_spectrum(seed in any::<u64>(), n in 1usize..=8, margin in 1e-3f64..0.5, up in any::<bool>()) {
            let s = random_sym(&mut rng(seed), n);
            let lmin = oracle_eigenvalues(&s)[0];
            // Shift so the smallest eigenvalue lands at ±margin.
            let shift = if up { margin - lmin } else { -margin - lmin };
            let shifted = s.add(&SymMatrix::identity(n).scale(shift));
            let pd = sym_eigenvalues(&shifted).unwrap()[0] > 0.0;
            prop_assert_eq!(pd, up);
            match cholesky(&shifted) {
                Some(l) => {
                    prop_assert!(pd);
                    prop_assert!((&l * l.transpose() - shifted.as_matrix()).amax() <= 1e-12);
                }
                None => prop_assert!(!pd),
            }
        }

        #[test]
        fn schur_equivalence_with_negative_pivot(seed in any::<u64>(), p in 1usize..=4, q in 1usize..=4) {
            let mut r = rng(seed);
            let n = p + q;
            let s = random_sym(&mut r, n).scale(2.0);
            let mut part = PartitionedMatrix::split(&s, p).unwrap();
            let cmax = *oracle_eigenvalues(&part.c).last().unwrap();
            part.c = part.c.sub(&SymMatrix::identity(q).scale(cmax + 0.1));
            let full = part.to_sym();
            let full_neg = *oracle_eigenvalues(&full).last().unwrap() < 0.0;
            let red_neg = *oracle_eigenvalues(&part.schur_reduce().unwrap()).last().unwrap() < 0.0;
            prop_assert_eq!(full_neg, red_neg);
        }
    }

    #[test]
    fn spd_helpers() {
        let a = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (inv, logdet) = spd_inverse_logdet(&a).unwrap();
        assert!((&a * inv - Matrix::identity(2, 2)).amax() < 1e-14);
        assert!((logdet - 11f64.ln()).abs() < 1e-14);
        let x = spd_solve(&a, &Vector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!((&a * x - Vector::from_vec(vec![1.0, 2.0])).amax() < 1e-14);
    }
}
