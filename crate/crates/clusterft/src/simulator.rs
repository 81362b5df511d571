//! State-vector simulation of qubit registers.
//!
//! Indexing is little-endian throughout: qubit 0 is the least significant
//! bit of the amplitude index. A gate on targets `[t0, t1, ...]` treats
//! `t0` as the least significant bit of the gate's own row/column index.
//!
//! States are values; every operation returns a fresh state. Global phase
//! is never normalized away — comparisons that must ignore it go through
//! [`StateVector::fidelity`].

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{is_finite, CMatrix};

/// Hard cap on register size; 2^22 amplitudes ≈ 67 MB.
pub const MAX_QUBITS: usize = 22;

/// Normalized amplitude vector over `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// All-zeros computational basis state `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(Error::RegisterTooLarge { requested: n_qubits, limit: MAX_QUBITS });
        }
        let mut amps = vec![Complex64::ZERO; 1 << n_qubits];
        amps[0] = Complex64::ONE;
        Ok(Self { n_qubits, amps })
    }

    /// `|+⟩^⊗n`.
    pub fn plus(n_qubits: usize) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(Error::RegisterTooLarge { requested: n_qubits, limit: MAX_QUBITS });
        }
        let dim = 1usize << n_qubits;
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Ok(Self { n_qubits, amps: vec![a; dim] })
    }

    /// Computational basis state `|bits⟩` (bit i of `bits` = qubit i).
    pub fn basis(n_qubits: usize, bits: usize) -> Result<Self> {
        let mut s = Self::zero(n_qubits)?;
        s.amps[0] = Complex64::ZERO;
        s.amps[bits & ((1 << n_qubits) - 1)] = Complex64::ONE;
        Ok(s)
    }

    /// Wrap raw amplitudes; must have power-of-two length and unit norm.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if !dim.is_power_of_two() {
            return Err(Error::InvalidTarget(format!("amplitude count {dim} not a power of two")));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(Error::RegisterTooLarge { requested: n_qubits, limit: MAX_QUBITS });
        }
        let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !norm2.is_finite() {
            return Err(Error::NonFinite("state amplitudes"));
        }
        if (norm2 - 1.0).abs() > 1e-10 {
            return Err(Error::OutOfRange(format!("state norm² = {norm2}, expected 1")));
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    /// `|⟨self|other⟩|`; phase-insensitive overlap.
    pub fn fidelity(&self, other: &Self) -> f64 {
        assert_eq!(self.n_qubits, other.n_qubits);
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm()
    }

    /// Largest absolute amplitude difference (phase-sensitive).
    pub fn max_amp_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.n_qubits, other.n_qubits);
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Tensor `other` onto the high end: new qubits get indices after ours.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let n = self.n_qubits + other.n_qubits;
        if n > MAX_QUBITS {
            return Err(Error::RegisterTooLarge { requested: n, limit: MAX_QUBITS });
        }
        let mut amps = vec![Complex64::ZERO; 1 << n];
        for (j, b) in other.amps.iter().enumerate() {
            if b.norm_sqr() == 0.0 {
                continue;
            }
            let base = j << self.n_qubits;
            for (i, a) in self.amps.iter().enumerate() {
                amps[base | i] = a * b;
            }
        }
        Ok(Self { n_qubits: n, amps })
    }

    /// Remove a qubit known to be in the computational state `|bit⟩`
    /// (e.g. just measured). Errors if any amplitude on the other branch
    /// exceeds 1e-10.
    pub fn drop_qubit(&self, qubit: usize, bit: u8) -> Result<Self> {
        self.check_targets(&[qubit])?;
        let mask = 1usize << qubit;
        let mut leak = 0.0f64;
        for (idx, a) in self.amps.iter().enumerate() {
            if ((idx & mask) != 0) as u8 != bit {
                leak = leak.max(a.norm());
            }
        }
        if leak > 1e-10 {
            return Err(Error::InvalidTarget(format!(
                "qubit {qubit} is not in |{bit}⟩ (leak {leak:.3e})"
            )));
        }
        let mut amps = Vec::with_capacity(self.amps.len() / 2);
        for (idx, a) in self.amps.iter().enumerate() {
            if ((idx & mask) != 0) as u8 == bit {
                amps.push(*a);
            }
        }
        Ok(Self { n_qubits: self.n_qubits - 1, amps })
    }

    /// Reorder qubits so that old qubit `perm[i]` becomes new qubit `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_qubits {
            return Err(Error::InvalidTarget("permutation length mismatch".into()));
        }
        self.check_targets(perm)?;
        let mut amps = vec![Complex64::ZERO; self.amps.len()];
        for (idx, a) in self.amps.iter().enumerate() {
            let mut new_idx = 0usize;
            for (new_pos, &old_pos) in perm.iter().enumerate() {
                new_idx |= ((idx >> old_pos) & 1) << new_pos;
            }
            amps[new_idx] = *a;
        }
        Ok(Self { n_qubits: self.n_qubits, amps })
    }

    /// Reduced density matrix on `keep` (in the given qubit order).
    pub fn reduced_density(&self, keep: &[usize]) -> Result<CMatrix> {
        self.check_targets(keep)?;
        let k = keep.len();
        let dim = 1usize << k;
        let mut rho = CMatrix::zeros(dim, dim);
        let rest: Vec<usize> = (0..self.n_qubits).filter(|q| !keep.contains(q)).collect();
        let rest_dim = 1usize << rest.len();
        for e in 0..rest_dim {
            // Conditional (unnormalized) vector for this environment branch.
            let mut v = vec![Complex64::ZERO; dim];
            for (sub, slot) in v.iter_mut().enumerate() {
                let mut idx = 0usize;
                for (pos, &q) in keep.iter().enumerate() {
                    idx |= ((sub >> pos) & 1) << q;
                }
                for (pos, &q) in rest.iter().enumerate() {
                    idx |= ((e >> pos) & 1) << q;
                }
                *slot = self.amps[idx];
            }
            for i in 0..dim {
                for j in 0..dim {
                    rho[(i, j)] += v[i] * v[j].conj();
                }
            }
        }
        Ok(rho)
    }

    fn check_targets(&self, targets: &[usize]) -> Result<()> {
        for (i, &t) in targets.iter().enumerate() {
            if t >= self.n_qubits {
                return Err(Error::InvalidTarget(format!(
                    "qubit {t} out of range for {}-qubit register",
                    self.n_qubits
                )));
            }
            if targets[..i].contains(&t) {
                return Err(Error::InvalidTarget(format!("duplicate target qubit {t}")));
            }
        }
        Ok(())
    }
}

/// Apply `gate` (dim `2^k`) to the ordered targets; returns the new state.
///
/// `targets[0]` is the least significant bit of the gate's index.
pub fn apply(state: &StateVector, gate: &CMatrix, targets: &[usize]) -> Result<StateVector> {
    let k = targets.len();
    let gdim = 1usize << k;
    if gate.nrows() != gdim || gate.ncols() != gdim {
        return Err(Error::DimensionMismatch(format!(
            "gate is {}×{}, expected {gdim}×{gdim} for {k} targets",
            gate.nrows(),
            gate.ncols()
        )));
    }
    if !is_finite(gate) {
        return Err(Error::NonFinite("gate"));
    }
    state.check_targets(targets)?;

    let n = state.n_qubits;
    let mut amps = state.amps.clone();
    let masks: Vec<usize> = targets.iter().map(|&t| 1usize << t).collect();
    let free: Vec<usize> = (0..n).filter(|q| !targets.contains(q)).map(|q| 1usize << q).collect();
    let free_count = 1usize << free.len();
    let mut gathered = vec![Complex64::ZERO; gdim];
    for f in 0..free_count {
        let mut base = 0usize;
        for (pos, m) in free.iter().enumerate() {
            if (f >> pos) & 1 == 1 {
                base |= m;
            }
        }
        for (sub, g) in gathered.iter_mut().enumerate() {
            let mut idx = base;
            for (pos, m) in masks.iter().enumerate() {
                if (sub >> pos) & 1 == 1 {
                    idx |= m;
                }
            }
            *g = amps[idx];
        }
        for row in 0..gdim {
            let mut acc = Complex64::ZERO;
            for (col, g) in gathered.iter().enumerate() {
                acc += gate[(row, col)] * g;
            }
            let mut idx = base;
            for (pos, m) in masks.iter().enumerate() {
                if (row >> pos) & 1 == 1 {
                    idx |= m;
                }
            }
            amps[idx] = acc;
        }
    }
    Ok(StateVector { n_qubits: n, amps })
}

/// Embed `gate` on `targets` into a full `2^n × 2^n` unitary.
pub fn embed_gate(n_qubits: usize, gate: &CMatrix, targets: &[usize]) -> Result<CMatrix> {
    let dim = 1usize << n_qubits;
    let mut out = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let basis = StateVector::basis(n_qubits, col)?;
        let image = apply(&basis, gate, targets)?;
        for row in 0..dim {
            out[(row, col)] = image.amps[row];
        }
    }
    Ok(out)
}

/// Outcome of a single-qubit measurement.
#[derive(Debug, Clone)]
pub struct Measurement {
    /// Observed bit.
    pub outcome: u8,
    /// Renormalized post-measurement state (measured qubit collapsed).
    pub posterior: StateVector,
    /// Probability of the observed branch.
    pub prob: f64,
}

/// Measure `qubit` in the basis `{U†|0⟩, U†|1⟩}` for `U = basis_rotation`.
///
/// Equivalent to applying `basis_rotation` to the qubit, then measuring in
/// the computational basis. `forced` selects a branch (an error if its
/// probability is below 1e-12); otherwise the branch is sampled from `rng`.
pub fn measure(
    state: &StateVector,
    qubit: usize,
    basis_rotation: &CMatrix,
    forced: Option<u8>,
    rng: &mut ChaCha8Rng,
) -> Result<Measurement> {
    if basis_rotation.nrows() != 2 || basis_rotation.ncols() != 2 {
        return Err(Error::DimensionMismatch("basis rotation must be 2×2".into()));
    }
    let rotated = apply(state, basis_rotation, &[qubit])?;
    let mask = 1usize << qubit;
    let p1: f64 = rotated
        .amps
        .iter()
        .enumerate()
        .filter(|(i, _)| i & mask != 0)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let p0 = 1.0 - p1;
    let outcome = match forced {
        Some(b) => b & 1,
        None => {
            let r: f64 = rng.random();
            u8::from(r >= p0)
        }
    };
    let prob = if outcome == 0 { p0 } else { p1 };
    if prob < 1e-12 {
        return Err(Error::ZeroProbabilityBranch { prob });
    }
    let scale = Complex64::new(1.0 / prob.sqrt(), 0.0);
    let mut amps = rotated.amps;
    for (i, a) in amps.iter_mut().enumerate() {
        if ((i & mask != 0) as u8) == outcome {
            *a *= scale;
        } else {
            *a = Complex64::ZERO;
        }
    }
    Ok(Measurement { outcome, posterior: StateVector { n_qubits: state.n_qubits, amps }, prob })
}

/// Probability distribution over computational-basis outcomes of a list of
/// qubits. Outcome bit `i` is the value of `qubits[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    n_bits: usize,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if !probs.len().is_power_of_two() {
            return Err(Error::InvalidTarget("probability vector length".into()));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::OutOfRange(format!("probabilities sum to {total}")));
        }
        let n_bits = probs.len().trailing_zeros() as usize;
        Ok(Self { n_bits, probs })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, outcome: usize) -> f64 {
        self.probs.get(outcome).copied().unwrap_or(0.0)
    }

    /// Relabel outcomes by XOR with `mask` (a Pauli-X correction on the
    /// bits set in `mask`).
    pub fn xor_relabel(&self, mask: usize) -> Self {
        let mut probs = vec![0.0; self.probs.len()];
        for (i, p) in self.probs.iter().enumerate() {
            probs[i ^ (mask & (self.probs.len() - 1))] = *p;
        }
        Self { n_bits: self.n_bits, probs }
    }

    /// Draw one outcome.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if r < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    /// Empirical distribution of `shots` samples.
    pub fn resample(&self, shots: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut counts = vec![0usize; self.probs.len()];
        for _ in 0..shots {
            counts[self.sample(rng)] += 1;
        }
        Self {
            n_bits: self.n_bits,
            probs: counts.iter().map(|&c| c as f64 / shots as f64).collect(),
        }
    }
}

/// Marginal computational-basis distribution over the listed qubits.
pub fn distribution(state: &StateVector, qubits: &[usize]) -> Result<Distribution> {
    state.check_targets(qubits)?;
    let k = qubits.len();
    let mut probs = vec![0.0f64; 1 << k];
    for (idx, a) in state.amps.iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let mut out = 0usize;
        for (pos, &q) in qubits.iter().enumerate() {
            out |= ((idx >> q) & 1) << pos;
        }
        probs[out] += p;
    }
    Ok(Distribution { n_bits: k, probs })
}

/// Kolmogorov distance `½ Σ_x |p(x) − q(x)|`.
///
/// Distributions over different outcome-space sizes are aligned by treating
/// missing outcomes as probability 0.
pub fn kolmogorov(p: &Distribution, q: &Distribution) -> f64 {
    let len = p.probs.len().max(q.probs.len());
    let mut total = 0.0;
    for i in 0..len {
        total += (p.prob(i) - q.prob(i)).abs();
    }
    total / 2.0
}

/// Common single- and two-qubit gate matrices.
pub mod gates {
    use super::CMatrix;
    use num_complex::Complex64;

    const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

    pub fn h() -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(R, 0.0),
                Complex64::new(R, 0.0),
                Complex64::new(R, 0.0),
                Complex64::new(-R, 0.0),
            ],
        )
    }

    pub fn x() -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[Complex64::ZERO, Complex64::ONE, Complex64::ONE, Complex64::ZERO],
        )
    }

    pub fn z() -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[Complex64::ONE, Complex64::ZERO, Complex64::ZERO, -Complex64::ONE],
        )
    }

    /// `Z_θ = diag(1, e^{iθ})`: rotation by θ about the z axis.
    pub fn z_rot(theta: f64) -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::ONE,
                Complex64::ZERO,
                Complex64::ZERO,
                Complex64::new(0.0, theta).exp(),
            ],
        )
    }

    /// `X_α = H·Z_α·H`: rotation by α about the x axis.
    pub fn x_rot(alpha: f64) -> CMatrix {
        h() * z_rot(alpha) * h()
    }

    /// The canonical single-qubit gate `H·Z_α` (Z-rotation first).
    pub fn hz(alpha: f64) -> CMatrix {
        h() * z_rot(alpha)
    }

    /// Controlled-Z; symmetric in its two qubits.
    pub fn cz() -> CMatrix {
        let mut m = CMatrix::identity(4, 4);
        m[(3, 3)] = -Complex64::ONE;
        m
    }

    /// CNOT with control = target list position 0, target = position 1.
    pub fn cnot() -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        // |t c⟩ indexing with c the low bit: c=1 flips t.
        m[(0b00, 0b00)] = Complex64::ONE;
        m[(0b11, 0b01)] = Complex64::ONE;
        m[(0b10, 0b10)] = Complex64::ONE;
        m[(0b01, 0b11)] = Complex64::ONE;
        m
    }

    pub fn swap() -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        m[(0b00, 0b00)] = Complex64::ONE;
        m[(0b10, 0b01)] = Complex64::ONE;
        m[(0b01, 0b10)] = Complex64::ONE;
        m[(0b11, 0b11)] = Complex64::ONE;
        m
    }

    /// `(H⊗H)·CZ` on two qubits: the canonical entangling gate.
    pub fn hh_cz() -> CMatrix {
        // Qubit 0 is the low bit, so the simulator-convention matrix is
        // built by embedding; here both factors are identical so the plain
        // Kronecker form is already correct.
        let hh = h().kronecker(&h());
        hh * cz()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_unitary, rng_from_seed};
    use approx::assert_abs_diff_eq;

    #[test]
    fn h_on_zero_gives_plus() {
        let s = StateVector::zero(1).unwrap();
        let plus = apply(&s, &gates::h(), &[0]).unwrap();
        assert!(plus.max_amp_diff(&StateVector::plus(1).unwrap()) < 1e-15);
    }

    #[test]
    fn cz_on_plus_plus_gives_cluster() {
        let s = StateVector::plus(2).unwrap();
        let c = apply(&s, &gates::cz(), &[0, 1]).unwrap();
        let want = StateVector::from_amplitudes(vec![
            Complex64::new(0.5, 0.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(-0.5, 0.0),
        ])
        .unwrap();
        assert!(c.max_amp_diff(&want) < 1e-15);
    }

    #[test]
    fn x_permutes_amplitudes() {
        let u = haar_unitary(8, 17);
        let amps: Vec<Complex64> = u.column(0).iter().cloned().collect();
        let s = StateVector::from_amplitudes(amps.clone()).unwrap();
        let flipped = apply(&s, &gates::x(), &[1]).unwrap();
        for idx in 0..8 {
            assert!((flipped.amplitudes()[idx] - amps[idx ^ 0b010]).norm() < 1e-14);
        }
    }

    #[test]
    fn measure_plus_in_h_basis_is_deterministic() {
        let s = StateVector::plus(1).unwrap();
        let mut rng = rng_from_seed(0);
        let m = measure(&s, 0, &gates::h(), None, &mut rng).unwrap();
        assert_eq!(m.outcome, 0);
        assert_abs_diff_eq!(m.prob, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn measure_zero_in_computational_basis() {
        let s = StateVector::zero(1).unwrap();
        let mut rng = rng_from_seed(1);
        let id = CMatrix::identity(2, 2);
        let m = measure(&s, 0, &id, None, &mut rng).unwrap();
        assert_eq!(m.outcome, 0);
        assert_abs_diff_eq!(m.prob, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn measure_forced_zero_probability_errors() {
        let s = StateVector::zero(1).unwrap();
        let mut rng = rng_from_seed(1);
        let id = CMatrix::identity(2, 2);
        assert!(matches!(
            measure(&s, 0, &id, Some(1), &mut rng),
            Err(Error::ZeroProbabilityBranch { .. })
        ));
    }

    #[test]
    fn two_node_cluster_measurement_teleports() {
        // Measure node 0 of a 2-node cluster with rotation H·Z_α; the
        // posterior on node 1 must be X^m · H · Z_α |+⟩.
        let alpha = 0.731;
        for forced in [0u8, 1u8] {
            let mut rng = rng_from_seed(2);
            let cluster = apply(&StateVector::plus(2).unwrap(), &gates::cz(), &[0, 1]).unwrap();
            let m = measure(&cluster, 0, &gates::hz(alpha), Some(forced), &mut rng).unwrap();
            assert_abs_diff_eq!(m.prob, 0.5, epsilon = 1e-12);
            let mut target =
                apply(&StateVector::plus(1).unwrap(), &gates::hz(alpha), &[0]).unwrap();
            if forced == 1 {
                target = apply(&target, &gates::x(), &[0]).unwrap();
            }
            let expected =
                StateVector::basis(1, forced as usize).unwrap().tensor(&target).unwrap();
            assert!(m.posterior.max_amp_diff(&expected) < 1e-12, "branch m={forced} mismatch");
        }
    }

    #[test]
    fn distribution_basics() {
        let zero = StateVector::zero(1).unwrap();
        let d = distribution(&zero, &[0]).unwrap();
        assert_eq!(d.probs(), &[1.0, 0.0]);

        let plus = StateVector::plus(1).unwrap();
        let d = distribution(&plus, &[0]).unwrap();
        assert_abs_diff_eq!(d.prob(0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.prob(1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn distribution_matches_amplitude_sums() {
        let u = haar_unitary(8, 23);
        let amps: Vec<Complex64> = u.column(3).iter().cloned().collect();
        let s = StateVector::from_amplitudes(amps.clone()).unwrap();
        let d = distribution(&s, &[2, 0]).unwrap();
        // outcome bit 0 = qubit 2, bit 1 = qubit 0.
        for out in 0..4usize {
            let want: f64 = (0..8)
                .filter(|i| ((i >> 2) & 1) == (out & 1) && (i & 1) == ((out >> 1) & 1))
                .map(|i| amps[i].norm_sqr())
                .sum();
            assert_abs_diff_eq!(d.prob(out), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn kolmogorov_examples() {
        let p = Distribution::from_probs(vec![1.0, 0.0]).unwrap();
        let q = Distribution::from_probs(vec![0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(kolmogorov(&p, &p), 0.0);
        assert_abs_diff_eq!(kolmogorov(&p, &q), 1.0);
        let a = Distribution::from_probs(vec![0.75, 0.25]).unwrap();
        let b = Distribution::from_probs(vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(kolmogorov(&a, &b), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn kolmogorov_symmetry_and_triangle() {
        let mut rng = rng_from_seed(9);
        for _ in 0..50 {
            let mut draw = || {
                let mut v: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                let t: f64 = v.iter().sum();
                v.iter_mut().for_each(|x| *x /= t);
                Distribution::from_probs(v).unwrap()
            };
            let (p, q, r) = (draw(), draw(), draw());
            assert_abs_diff_eq!(kolmogorov(&p, &q), kolmogorov(&q, &p), epsilon = 1e-14);
            assert!(kolmogorov(&p, &r) <= kolmogorov(&p, &q) + kolmogorov(&q, &r) + 1e-12);
            assert!((0.0..=1.0 + 1e-12).contains(&kolmogorov(&p, &q)));
        }
    }

    #[test]
    fn measure_branch_probabilities_sum_to_one() {
        let u = haar_unitary(8, 5);
        let amps: Vec<Complex64> = u.column(1).iter().cloned().collect();
        let s = StateVector::from_amplitudes(amps).unwrap();
        let rot = haar_unitary(2, 6);
        let mut rng = rng_from_seed(7);
        let m0 = measure(&s, 1, &rot, Some(0), &mut rng).unwrap();
        let m1 = measure(&s, 1, &rot, Some(1), &mut rng).unwrap();
        assert_abs_diff_eq!(m0.prob + m1.prob, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn norm_preserved_over_many_random_gates() {
        let mut rng = rng_from_seed(8);
        let mut s = StateVector::plus(4).unwrap();
        for i in 0..10_000 {
            let q = i % 4;
            let u = crate::linalg::haar_unitary_rng(2, &mut rng);
            s = apply(&s, &u, &[q]).unwrap();
        }
        assert!((s.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn embed_matches_apply() {
        let u = haar_unitary(4, 31);
        let full = embed_gate(3, &u, &[2, 0]).unwrap();
        let state = {
            let w = haar_unitary(8, 32);
            StateVector::from_amplitudes(w.column(0).iter().cloned().collect()).unwrap()
        };
        let via_apply = apply(&state, &u, &[2, 0]).unwrap();
        let via_embed = apply(&state, &full, &[0, 1, 2]).unwrap();
        assert!(via_apply.max_amp_diff(&via_embed) < 1e-12);
    }

    #[test]
    fn drop_qubit_after_collapse() {
        let s =
            StateVector::basis(1, 1).unwrap().tensor(&StateVector::plus(1).unwrap()).unwrap();
        // qubit 0 = |1⟩, qubit 1 = |+⟩
        let dropped = s.drop_qubit(0, 1).unwrap();
        assert!(dropped.max_amp_diff(&StateVector::plus(1).unwrap()) < 1e-15);
        assert!(s.drop_qubit(1, 0).is_err()); // |+⟩ is not collapsed
    }

    #[test]
    fn permuted_reorders_bits() {
        let s = StateVector::basis(3, 0b011).unwrap();
        // old qubit 2 -> new 0, old 0 -> new 1, old 1 -> new 2
        let p = s.permuted(&[2, 0, 1]).unwrap();
        assert!(p.max_amp_diff(&StateVector::basis(3, 0b110).unwrap()) < 1e-15);
    }

    #[test]
    fn gate_sanity() {
        // HH_CZ applied to |00⟩ equals (H⊗H)CZ|00⟩ = |++⟩.
        let s = StateVector::zero(2).unwrap();
        let out = apply(&s, &gates::hh_cz(), &[0, 1]).unwrap();
        assert!(out.max_amp_diff(&StateVector::plus(2).unwrap()) < 1e-14);
        // CNOT: control is targets[0].
        let s = StateVector::basis(2, 0b01).unwrap(); // qubit0=1, qubit1=0
        let out = apply(&s, &gates::cnot(), &[0, 1]).unwrap();
        assert!(out.max_amp_diff(&StateVector::basis(2, 0b11).unwrap()) < 1e-15);
    }
}
