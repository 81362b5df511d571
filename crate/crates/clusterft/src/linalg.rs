//! Dense complex linear algebra: operator norms, SVD, tensor products,
//! subspace restriction, and seeded random matrix generation.
//!
//! Everything in this module works on [`CMatrix`], a dense column-stored
//! complex matrix. Matrices are value types: operations return fresh
//! matrices and never mutate their inputs. All randomness flows through
//! explicit seeds (or caller-provided RNGs), so every computation in the
//! crate is reproducible.
//!
//! Tensor products use the usual mathematical convention: in `kron(a, b)`
//! the first factor indexes the *high* part of the joint index,
//! `(i·rows_b + k, j·cols_b + l) = a[(i,j)]·b[(k,l)]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense complex matrix used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex vector.
pub type CVector = DVector<Complex64>;

/// Default tolerance for equality checks between operators.
pub const TOL_EQ: f64 = 1e-10;
/// Default tolerance for orthonormality checks.
pub const TOL_ORTHO: f64 = 1e-12;

/// `true` if every entry of `m` is finite.
pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest singular value of `m` (the operator norm).
///
/// Computed as `√λ_max(M†M)`; the Hermitian eigensolver is backward stable,
/// which gives the top eigenvalue (and hence `σ_max`) to relative accuracy.
/// Errors on non-finite input; returns 0 for empty matrices.
pub fn op_norm(m: &CMatrix) -> Result<f64> {
    if !is_finite(m) {
        return Err(Error::NonFinite("op_norm input"));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let gram = if m.nrows() >= m.ncols() { m.adjoint() * m } else { m * m.adjoint() };
    let eigs = gram.symmetric_eigen().eigenvalues;
    let top = eigs.iter().cloned().fold(0.0, f64::max);
    Ok(top.max(0.0).sqrt())
}

/// Operator-norm distance `‖a − b‖`.
pub fn op_dist(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "op_dist: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    op_norm(&(a - b))
}

/// Result of a singular value decomposition `M = L·Σ·R`.
///
/// `left` and `right` are unitary (for square `M`; isometric blocks in the
/// rectangular case), and `sigma` holds the singular values in nonincreasing
/// order. `Σ` is the (rectangular) diagonal matrix built from `sigma`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub left: CMatrix,
    pub sigma: Vec<f64>,
    pub right: CMatrix,
}

impl Svd {
    /// The smallest singular value (0 for empty matrices).
    pub fn sigma_min(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }

    /// The largest singular value.
    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// Reassemble `L·Σ·R`.
    pub fn reassemble(&self) -> CMatrix {
        let k = self.sigma.len();
        let mut s = CMatrix::zeros(self.left.ncols(), self.right.nrows());
        for (j, &v) in self.sigma.iter().enumerate().take(k) {
            s[(j, j)] = Complex64::new(v, 0.0);
        }
        &self.left * s * &self.right
    }
}

/// Singular value decomposition with singular values sorted nonincreasing.
///
/// One-sided Jacobi: cyclically orthogonalize column pairs with 2×2 unitary
/// rotations accumulated into the right factor. Robust to full relative
/// accuracy at the dimensions this crate works with (≤ a few hundred).
///
/// For an `m×n` input, `left` is `m×min(m,n)` and `right` is `min(m,n)×n`
/// (thin form), which coincides with the full decomposition for square
/// matrices.
pub fn svd(m: &CMatrix) -> Result<Svd> {
    if !is_finite(m) {
        return Err(Error::NonFinite("svd input"));
    }
    if m.nrows() < m.ncols() {
        // Work on the adjoint so columns are the short dimension.
        let f = svd(&m.adjoint())?;
        return Ok(Svd { left: f.right.adjoint(), sigma: f.sigma, right: f.left.adjoint() });
    }

    let rows = m.nrows();
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = identity(n);
    let eps = 4.0 * f64::EPSILON;

    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut app = 0.0f64;
                let mut aqq = 0.0f64;
                let mut apq = Complex64::ZERO;
                for i in 0..rows {
                    let x = a[(i, p)];
                    let y = a[(i, q)];
                    app += x.norm_sqr();
                    aqq += y.norm_sqr();
                    apq += x.conj() * y;
                }
                let g = apq.norm();
                if g <= eps * (app * aqq).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                // 2×2 rotation zeroing the (p,q) inner product, |θ| ≤ π/4.
                let phase = apq / g;
                let tau = (aqq - app) / (2.0 * g);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let sp = Complex64::new(s, 0.0) * phase.conj(); //  s·e^{−iφ}
                let sq = Complex64::new(s, 0.0) * phase; //         s·e^{+iφ}
                let cc = Complex64::new(c, 0.0);
                for i in 0..rows {
                    let x = a[(i, p)];
                    let y = a[(i, q)];
                    a[(i, p)] = cc * x - sp * y;
                    a[(i, q)] = sq * x + cc * y;
                }
                for i in 0..n {
                    let x = v[(i, p)];
                    let y = v[(i, q)];
                    v[(i, p)] = cc * x - sp * y;
                    v[(i, q)] = sq * x + cc * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort nonincreasing.
    let mut norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    norms.sort_by(|x, y| y.partial_cmp(x).unwrap());

    let cutoff = sigma.first().copied().unwrap_or(0.0) * (rows.max(n) as f64) * f64::EPSILON;
    let mut left = CMatrix::zeros(rows, n);
    let mut null_cols: Vec<usize> = Vec::new();
    for (out, &j) in order.iter().enumerate() {
        if sigma[out] > cutoff && sigma[out] > 0.0 {
            let scale = Complex64::new(1.0 / sigma[out], 0.0);
            for i in 0..rows {
                left[(i, out)] = a[(i, j)] * scale;
            }
        } else {
            null_cols.push(out);
        }
    }
    // Complete the left factor on (numerically) null columns.
    for out in null_cols {
        'candidates: for k in 0..rows {
            let mut col = CVector::zeros(rows);
            col[k] = Complex64::ONE;
            for j in 0..n {
                if j == out {
                    continue;
                }
                let lj: CVector = left.column(j).into();
                let overlap = lj.adjoint() * &col;
                col -= lj * overlap[(0, 0)];
            }
            let nn = col.norm();
            if nn > 0.5 {
                col /= Complex64::new(nn, 0.0);
                left.column_mut(out).copy_from(&col);
                break 'candidates;
            }
        }
    }

    let v_sorted =
        CMatrix::from_columns(&order.iter().map(|&j| v.column(j)).collect::<Vec<_>>());
    Ok(Svd { left, sigma, right: v_sorted.adjoint() })
}

/// Polar decomposition `M = U·P` with `U` the unitary (isometric) factor.
///
/// For rectangular `m×n` input with `m ≥ n` this returns the `m×n` isometry
/// `L·R` from the thin SVD. When `M` is singular the factor is still a valid
/// isometry, just no longer unique.
pub fn polar_unitary(m: &CMatrix) -> Result<CMatrix> {
    let f = svd(m)?;
    Ok(&f.left * &f.right)
}

/// Tensor (Kronecker) product, first factor high.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `n×n` identity.
pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Deviation of `m` from unitarity, `‖m†m − I‖`.
pub fn unitarity_deviation(m: &CMatrix) -> Result<f64> {
    let n = m.ncols();
    op_norm(&(m.adjoint() * m - identity(n)))
}

/// Error unless `m` is unitary to `tol`.
pub fn check_unitary(m: &CMatrix, tol: f64) -> Result<()> {
    let dev = unitarity_deviation(m)?;
    if dev > tol {
        return Err(Error::NotUnitary { deviation: dev, tolerance: tol });
    }
    Ok(())
}

/// An isometry identifying a subspace `S` of an ambient space `T`.
///
/// The columns of `basis` are orthonormal vectors of the ambient space; the
/// matrix maps `S`-coordinates into `T`. Orthonormality is validated at
/// construction.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    basis: CMatrix,
}

impl SubspaceBasis {
    /// Wrap an explicit isometry. Columns must be orthonormal to 1e-12.
    pub fn new(basis: CMatrix) -> Result<Self> {
        if basis.ncols() > basis.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "subspace of dimension {} in ambient dimension {}",
                basis.ncols(),
                basis.nrows()
            )));
        }
        let dev = op_norm(&(basis.adjoint() * &basis - identity(basis.ncols())))?;
        if dev > TOL_ORTHO {
            return Err(Error::NotUnitary { deviation: dev, tolerance: TOL_ORTHO });
        }
        Ok(Self { basis })
    }

    /// The span of the first `dim` standard basis vectors.
    pub fn standard(ambient: usize, dim: usize) -> Self {
        let mut b = CMatrix::zeros(ambient, dim);
        for j in 0..dim {
            b[(j, j)] = Complex64::ONE;
        }
        Self { basis: b }
    }

    /// A Haar-random `dim`-dimensional subspace of `C^ambient`.
    pub fn random(ambient: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let u = haar_unitary_rng(ambient, rng);
        Self { basis: u.columns(0, dim).into() }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// The isometry from `S`-coordinates into the ambient space.
    pub fn isometry(&self) -> &CMatrix {
        &self.basis
    }

    /// The orthogonal projector `P` onto the subspace.
    pub fn projector(&self) -> CMatrix {
        &self.basis * self.basis.adjoint()
    }

    /// An orthonormal basis for the orthocomplement `S⊥`.
    ///
    /// Built by column-pivoted QR of `I − P`: the pivoted factor puts the
    /// `ambient − dim` significant directions first.
    pub fn complement(&self) -> CMatrix {
        let d = self.ambient_dim();
        let m = self.dim();
        if d == m {
            return CMatrix::zeros(d, 0);
        }
        let q_proj = identity(d) - self.projector();
        let qr = q_proj.col_piv_qr();
        let q = qr.q();
        // Columns of Q spanning the range of I−P come first under pivoting;
        // re-project and orthonormalize to scrub rounding in the tail.
        let mut cols: Vec<CVector> = Vec::with_capacity(d - m);
        for j in 0..d {
            if cols.len() == d - m {
                break;
            }
            let mut v: CVector = q.column(j).into();
            // Project away any S component and any previously selected column.
            v = &v - &self.basis * (self.basis.adjoint() * &v);
            for c in &cols {
                let overlap = c.adjoint() * &v;
                v -= c * overlap[(0, 0)];
            }
            let norm = v.norm();
            if norm > 1e-8 {
                cols.push(v / Complex64::new(norm, 0.0));
            }
        }
        assert_eq!(cols.len(), d - m, "complement basis construction failed");
        CMatrix::from_columns(&cols.iter().map(|c| c.column(0)).collect::<Vec<_>>())
    }

    /// Unitary `[S | S⊥]` whose first `dim` columns are this basis.
    pub fn extended_basis(&self) -> CMatrix {
        let comp = self.complement();
        let d = self.ambient_dim();
        let mut out = CMatrix::zeros(d, d);
        out.columns_mut(0, self.dim()).copy_from(&self.basis);
        out.columns_mut(self.dim(), comp.ncols()).copy_from(&comp);
        out
    }
}

/// `M` composed with the isometry of `S`: a map from `S`-coordinates into `T`.
pub fn restrict(m: &CMatrix, s: &SubspaceBasis) -> Result<CMatrix> {
    if s.ambient_dim() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "restrict: matrix has {} columns, subspace ambient dimension is {}",
            m.ncols(),
            s.ambient_dim()
        )));
    }
    Ok(m * s.isometry())
}

/// Complex standard Gaussian (Ginibre) matrix.
pub fn ginibre(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    })
}

/// Haar-random unitary, deterministic for a given seed.
pub fn haar_unitary(dim: usize, seed: u64) -> CMatrix {
    let mut rng = rng_from_seed(seed);
    haar_unitary_rng(dim, &mut rng)
}

/// Haar-random unitary drawn from a caller-supplied RNG.
///
/// QR of a Ginibre matrix with the R-diagonal phases normalized, which gives
/// the Haar distribution on U(dim).
pub fn haar_unitary_rng(dim: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    assert!(dim >= 1, "haar_unitary requires dim >= 1");
    let g = ginibre(dim, dim, rng);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    // Fix the gauge: multiply each column by the phase of the matching R
    // diagonal so the distribution is exactly Haar.
    let mut u = q;
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::ONE };
        for i in 0..dim {
            u[(i, j)] *= phase;
        }
    }
    u
}

/// Random Hermitian matrix normalized to operator norm exactly 1.
pub fn random_hermitian_unit(dim: usize, seed: u64) -> CMatrix {
    let mut rng = rng_from_seed(seed);
    random_hermitian_unit_rng(dim, &mut rng)
}

/// RNG-driven variant of [`random_hermitian_unit`].
pub fn random_hermitian_unit_rng(dim: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    assert!(dim >= 1);
    let g = ginibre(dim, dim, rng);
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    let norm = op_norm(&h).expect("finite by construction");
    if norm == 0.0 {
        // Probability-zero fallback: a fixed unit-norm Hermitian.
        let mut m = CMatrix::zeros(dim, dim);
        m[(0, 0)] = Complex64::ONE;
        return m;
    }
    h / Complex64::new(norm, 0.0)
}

/// Eigendecomposition of a Hermitian matrix: `(eigenvalues, eigenvectors)`,
/// with `m = V·diag(λ)·V†`.
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !is_finite(m) {
        return Err(Error::NonFinite("hermitian_eigen input"));
    }
    let se = m.clone().symmetric_eigen();
    let vals: Vec<f64> = se.eigenvalues.iter().cloned().collect();
    Ok((vals, se.eigenvectors))
}

/// `exp(i·t·H)` for Hermitian `H`, via eigendecomposition.
pub fn exp_i_hermitian(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let d = CMatrix::from_diagonal(&CVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| Complex64::new(0.0, v * t).exp()),
    ));
    Ok(&vecs * d * vecs.adjoint())
}

/// ChaCha8 RNG from a bare seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent child RNG; used to fan work out across threads
/// while keeping results reproducible.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream))
}

/// Complex matrix from a row-major slice of `(re, im)` pairs.
pub fn mat_from_rows(rows: usize, cols: usize, entries: &[(f64, f64)]) -> CMatrix {
    assert_eq!(entries.len(), rows * cols);
    CMatrix::from_fn(rows, cols, |i, j| {
        let (re, im) = entries[i * cols + j];
        Complex64::new(re, im)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pauli_x() -> CMatrix {
        mat_from_rows(2, 2, &[(0., 0.), (1., 0.), (1., 0.), (0., 0.)])
    }

    #[test]
    fn op_norm_identity_is_one() {
        for n in [1, 2, 5, 8] {
            assert_abs_diff_eq!(op_norm(&identity(n)).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn op_norm_zero_matrix() {
        assert_eq!(op_norm(&CMatrix::zeros(4, 4)).unwrap(), 0.0);
    }

    #[test]
    fn op_norm_x_minus_identity_is_two() {
        // Eigenvalues of X − I are {0, −2}; the SVD oracle must agree.
        let m = pauli_x() - identity(2);
        assert_abs_diff_eq!(op_norm(&m).unwrap(), 2.0, epsilon = 1e-12);
        let f = svd(&m).unwrap();
        assert_abs_diff_eq!(f.sigma_max(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn op_norm_rejects_nan() {
        let mut m = identity(2);
        m[(0, 0)] = Complex64::new(f64::NAN, 0.0);
        assert!(op_norm(&m).is_err());
    }

    #[test]
    fn svd_of_diagonal() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]));
        let f = svd(&m).unwrap();
        assert_abs_diff_eq!(f.sigma[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.sigma[1], 1.0, epsilon = 1e-12);
        assert!(op_dist(&f.reassemble(), &m).unwrap() < 1e-12);
    }

    #[test]
    fn svd_of_unitary_has_unit_sigma() {
        let u = haar_unitary(6, 7);
        let f = svd(&u).unwrap();
        for s in &f.sigma {
            assert_abs_diff_eq!(*s, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        // 1000 random matrices up to dim 16.
        let mut rng = rng_from_seed(11);
        for k in 0..1000 {
            let n = 2 + k % 15;
            let m = ginibre(n, n, &mut rng);
            let f = svd(&m).unwrap();
            assert!(
                op_dist(&f.reassemble(), &m).unwrap() < 1e-10 * m.norm().max(1.0),
                "residual too large at dim {n}"
            );
            for w in f.sigma.windows(2) {
                assert!(w[0] >= w[1] - 1e-13, "singular values not sorted");
            }
            assert!(f.sigma.iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn kron_identities() {
        let i2 = identity(2);
        assert!(op_dist(&kron(&i2, &i2), &identity(4)).unwrap() < 1e-15);
        // X ⊗ I₂ is block anti-diagonal of identities.
        let xi = kron(&pauli_x(), &i2);
        let expected = mat_from_rows(
            4,
            4,
            &[
                (0., 0.), (0., 0.), (1., 0.), (0., 0.),
                (0., 0.), (0., 0.), (0., 0.), (1., 0.),
                (1., 0.), (0., 0.), (0., 0.), (0., 0.),
                (0., 0.), (1., 0.), (0., 0.), (0., 0.),
            ],
        );
        assert!(op_dist(&xi, &expected).unwrap() < 1e-15);
    }

    #[test]
    fn kron_index_formula() {
        let mut rng = rng_from_seed(3);
        let a = ginibre(2, 2, &mut rng);
        let b = ginibre(3, 3, &mut rng);
        let k = kron(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    for q in 0..3 {
                        let got = k[(i * 3 + p, j * 3 + q)];
                        let want = a[(i, j)] * b[(p, q)];
                        assert!((got - want).norm() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn restrict_of_identity_is_isometry() {
        let mut rng = rng_from_seed(5);
        let s = SubspaceBasis::random(8, 3, &mut rng);
        let r = restrict(&identity(8), &s).unwrap();
        assert!(op_dist(&r, s.isometry()).unwrap() < 1e-14);
    }

    #[test]
    fn restrict_full_space_standard_basis_is_noop() {
        let mut rng = rng_from_seed(6);
        let m = ginibre(5, 5, &mut rng);
        let s = SubspaceBasis::standard(5, 5);
        assert!(op_dist(&restrict(&m, &s).unwrap(), &m).unwrap() < 1e-15);
    }

    #[test]
    fn restrict_columns_match_basis_action() {
        let mut rng = rng_from_seed(7);
        let m = ginibre(8, 8, &mut rng);
        let s = SubspaceBasis::random(8, 3, &mut rng);
        let r = restrict(&m, &s).unwrap();
        for j in 0..3 {
            let col: CVector = s.isometry().column(j).into();
            let want = &m * col;
            let got: CVector = r.column(j).into();
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn restrict_dimension_mismatch() {
        let s = SubspaceBasis::standard(4, 2);
        assert!(restrict(&identity(8), &s).is_err());
    }

    #[test]
    fn haar_dim1_is_unit_modulus() {
        let u = haar_unitary(1, 42);
        assert_abs_diff_eq!(u[(0, 0)].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn haar_deterministic_given_seed() {
        let a = haar_unitary(4, 9);
        let b = haar_unitary(4, 9);
        assert_eq!(a, b);
    }

    #[test]
    fn haar_moment_matches() {
        // E|u_ij|² = 1/dim for Haar unitaries.
        let dim = 4;
        let mut total = 0.0;
        let mut count = 0usize;
        for seed in 0..1000u64 {
            let u = haar_unitary(dim, seed);
            for z in u.iter() {
                total += z.norm_sqr();
                count += 1;
            }
        }
        let mean = total / count as f64;
        assert!((mean - 0.25).abs() < 0.25 * 0.05, "mean {mean}");
    }

    #[test]
    fn generated_unitaries_have_unit_norm() {
        for seed in 0..50u64 {
            let dim = 2 + (seed as usize) % 7;
            let u = haar_unitary(dim, seed);
            assert!(unitarity_deviation(&u).unwrap() < 1e-10);
            assert_abs_diff_eq!(op_norm(&u).unwrap(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn hermitian_unit_properties() {
        for seed in 0..20u64 {
            let h = random_hermitian_unit(4, seed);
            assert!(op_dist(&h, &h.adjoint()).unwrap() < 1e-12);
            assert_abs_diff_eq!(op_norm(&h).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hermitian_unit_eigenvalues_in_range() {
        let h = random_hermitian_unit(2, 13);
        let (vals, _) = hermitian_eigen(&h).unwrap();
        let max_abs = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(vals.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
        assert_abs_diff_eq!(max_abs, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn submultiplicativity_on_random_pairs() {
        let mut rng = rng_from_seed(21);
        for _ in 0..100 {
            let a = ginibre(6, 6, &mut rng);
            let b = ginibre(6, 6, &mut rng);
            let lhs = op_norm(&(&a * &b)).unwrap();
            let rhs = op_norm(&a).unwrap() * op_norm(&b).unwrap();
            assert!(lhs <= rhs + 1e-9);
        }
    }

    #[test]
    fn exp_i_hermitian_is_unitary() {
        let h = random_hermitian_unit(4, 3);
        let u = exp_i_hermitian(&h, 0.37).unwrap();
        assert!(unitarity_deviation(&u).unwrap() < 1e-11);
    }

    #[test]
    fn complement_spans_orthocomplement() {
        let mut rng = rng_from_seed(31);
        for _ in 0..20 {
            let s = SubspaceBasis::random(8, 3, &mut rng);
            let c = s.complement();
            assert_eq!(c.ncols(), 5);
            // Orthonormal and orthogonal to S.
            assert!(op_norm(&(c.adjoint() * &c - identity(5))).unwrap() < 1e-10);
            assert!(op_norm(&(s.isometry().adjoint() * &c)).unwrap() < 1e-10);
            // Full extended basis is unitary.
            assert!(unitarity_deviation(&s.extended_basis()).unwrap() < 1e-10);
        }
    }
}
