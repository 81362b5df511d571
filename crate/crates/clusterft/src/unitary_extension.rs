//! Constructive unitary extension theorems.
//!
//! Both theorems answer the same kind of question: given unitaries whose
//! actions agree (or nearly agree) on a subspace `S` of the full space `T`,
//! produce a unitary extension with a certified operator-norm bound.
//!
//! - [`extend_first`]: if `U|_S = Ũ|_S`, there is a unitary `Ṽ` with
//!   `Ṽ|_S = V|_S` and `‖Ṽ − Ũ‖ ≤ ‖V − U‖`. The construction is
//!   `Ṽ = V·P + V·U†·Ũ·Q` with `P` the projector onto `S`, `Q = I − P`.
//! - [`extend_second`]: for any unitaries `U, V` there is a unitary `Ṽ`
//!   with `Ṽ|_S = V|_S` and `‖U − Ṽ‖ ≤ 2‖U|_S − V|_S‖`, built by
//!   block-decomposing `U†V` over `S ⊕ S⊥` and straightening the `S⊥`
//!   block with its SVD.
//!
//! Degenerate singular values in the second construction need no
//! tie-breaking: any valid SVD yields a valid extension, so tests assert
//! the contract, never uniqueness of `Ṽ`.

use crate::error::{Error, Result};
use crate::linalg::{
    check_unitary, identity, op_dist, op_norm, restrict, svd, CMatrix, SubspaceBasis, TOL_EQ,
};

/// A unitary extension together with its verified contract.
#[derive(Debug, Clone)]
pub struct ExtensionCertificate {
    /// The extension `Ṽ`.
    pub extension: CMatrix,
    /// `‖(Ṽ − source)·isometry(S)‖`: how far `Ṽ|_S` is from the source
    /// restriction it must reproduce.
    pub restriction_residual: f64,
    /// Left side of the theorem's bound, e.g. `‖Ṽ − Ũ‖`.
    pub bound_lhs: f64,
    /// Right side of the bound, e.g. `‖V − U‖`.
    pub bound_rhs: f64,
}

/// First unitary extension: requires `U|_S = Ũ|_S` (to 1e-10) and returns
/// `Ṽ = V·P + V·U†·Ũ·Q` with `‖Ṽ − Ũ‖ ≤ ‖V − U‖`.
pub fn extend_first(
    u: &CMatrix,
    u_tilde: &CMatrix,
    v: &CMatrix,
    s: &SubspaceBasis,
) -> Result<ExtensionCertificate> {
    let d = s.ambient_dim();
    for (name, m) in [("U", u), ("U~", u_tilde), ("V", v)] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "{name} is {}×{}, ambient dimension is {d}",
                m.nrows(),
                m.ncols()
            )));
        }
        check_unitary(m, 1e-8)?;
    }
    let hyp = op_dist(&restrict(u, s)?, &restrict(u_tilde, s)?)?;
    if hyp > TOL_EQ {
        return Err(Error::PreconditionViolated { context: "U|_S = U~|_S", residual: hyp });
    }

    let p = s.projector();
    let q = identity(d) - &p;
    let extension = v * &p + v * u.adjoint() * u_tilde * &q;

    let restriction_residual = op_norm(&((&extension - v) * s.isometry()))?;
    let bound_lhs = op_dist(&extension, u_tilde)?;
    let bound_rhs = op_dist(v, u)?;
    Ok(ExtensionCertificate { extension, restriction_residual, bound_lhs, bound_rhs })
}

/// Blocks of `M` in an orthonormal basis extending `S`:
/// `A` on `S`, `D` on `S⊥`, `B: S → S⊥`, `C: S⊥ → S`.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub a: CMatrix,
    pub b: CMatrix,
    pub c: CMatrix,
    pub d: CMatrix,
    /// The unitary `[S | S⊥]` basis used; `M = Φ·[[A,C],[B,D]]·Φ†`.
    pub basis: CMatrix,
}

impl BlockDecomposition {
    /// Rebuild the matrix in the original basis.
    pub fn reassemble(&self) -> CMatrix {
        let m = self.a.nrows();
        let n = self.d.nrows();
        let mut hat = CMatrix::zeros(m + n, m + n);
        hat.view_mut((0, 0), (m, m)).copy_from(&self.a);
        hat.view_mut((m, 0), (n, m)).copy_from(&self.b);
        hat.view_mut((0, m), (m, n)).copy_from(&self.c);
        hat.view_mut((m, m), (n, n)).copy_from(&self.d);
        &self.basis * hat * self.basis.adjoint()
    }
}

/// Decompose `M` into blocks relative to `S ⊕ S⊥`.
pub fn block_decompose(m: &CMatrix, s: &SubspaceBasis) -> Result<BlockDecomposition> {
    let d = s.ambient_dim();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}×{}, subspace ambient dimension is {d}",
            m.nrows(),
            m.ncols()
        )));
    }
    let phi = s.extended_basis();
    let hat = phi.adjoint() * m * &phi;
    let k = s.dim();
    let n = d - k;
    Ok(BlockDecomposition {
        a: hat.view((0, 0), (k, k)).into(),
        b: hat.view((k, 0), (n, k)).into(),
        c: hat.view((0, k), (k, n)).into(),
        d: hat.view((k, k), (n, n)).into(),
        basis: phi,
    })
}

/// Second unitary extension: returns `Ṽ` with `Ṽ|_S = V|_S` and
/// `‖U − Ṽ‖ ≤ 2‖U|_S − V|_S‖`.
pub fn extend_second(u: &CMatrix, v: &CMatrix, s: &SubspaceBasis) -> Result<ExtensionCertificate> {
    let d = s.ambient_dim();
    for (name, m) in [("U", u), ("V", v)] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "{name} is {}×{}, ambient dimension is {d}",
                m.nrows(),
                m.ncols()
            )));
        }
        check_unitary(m, 1e-8)?;
    }

    let extension = if s.dim() == d {
        // S⊥ is empty: the only extension of V|_S is V itself.
        v.clone()
    } else {
        let v_prime = u.adjoint() * v;
        let blocks = block_decompose(&v_prime, s)?;
        let f = svd(&blocks.d)?;
        // Straighten the S⊥ block: right-multiplying by R_D†·L_D† turns
        // D = L·Σ·R into its positive polar part L·Σ·L†, which is the
        // rotated-basis construction expressed in the original basis.
        let k = s.dim();
        let n = d - k;
        let mut rot = identity(d);
        rot.view_mut((k, k), (n, n)).copy_from(&(f.right.adjoint() * f.left.adjoint()));
        let phi = &blocks.basis;
        u * (v_prime * (phi * rot * phi.adjoint()))
    };

    let restriction_residual = op_norm(&((&extension - v) * s.isometry()))?;
    let bound_lhs = op_dist(u, &extension)?;
    let bound_rhs = 2.0 * op_dist(&restrict(u, s)?, &restrict(v, s)?)?;
    Ok(ExtensionCertificate { extension, restriction_residual, bound_lhs, bound_rhs })
}
