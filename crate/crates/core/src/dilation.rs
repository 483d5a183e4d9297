//! Joint system–ancilla states that realize a POVM or an instrument when the
//! ancilla is measured in its computational basis, and their embedding into
//! qubit registers.
//!
//! For a POVM `{M_j}` and input `|ψ⟩` the joint state is
//! `∑_j (M_j|ψ⟩) ⊗ |j⟩`, with the system register most significant and an
//! ancilla of exactly `n` levels for `n` outcomes. Padding to whole qubits
//! happens only in [`encode_to_qubits`].

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::{compose, digits, ComplexMatrix, ComplexVector, ZERO};
use crate::povm::{validate_completeness, Povm, QuantumInstrument, COMPLETENESS_TOL};

const NORM_TOL: f64 = 1e-10;

/// Number of qubits needed to hold `dim` levels.
pub fn qubits_for(dim: usize) -> usize {
    if dim <= 1 {
        0
    } else {
        (usize::BITS - (dim - 1).leading_zeros()) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubsystemEncoding {
    pub dim: usize,
    pub qubits: usize,
}

/// Qudit-to-qubit layout of a multi-register state. Level `l` of a subsystem
/// occupies that subsystem's qubits as the binary number `l`, first qubit
/// most significant, so `|2⟩` becomes `|10⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuditEncoding {
    subsystems: Vec<SubsystemEncoding>,
}

impl QuditEncoding {
    pub fn new(dims: &[usize]) -> Self {
        Self { subsystems: dims.iter().map(|&dim| SubsystemEncoding { dim, qubits: qubits_for(dim) }).collect() }
    }

    pub fn subsystems(&self) -> &[SubsystemEncoding] {
        &self.subsystems
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.dim).collect()
    }

    fn padded_dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| 1 << s.qubits).collect()
    }

    pub fn total_qubits(&self) -> usize {
        self.subsystems.iter().map(|s| s.qubits).sum()
    }

    /// Qubit indices of subsystem `i` within the register.
    pub fn qubit_range(&self, i: usize) -> Range<usize> {
        let start: usize = self.subsystems[..i].iter().map(|s| s.qubits).sum();
        start..start + self.subsystems[i].qubits
    }

    /// Bitstring carrying `level` of subsystem `i`.
    pub fn level_bits(&self, i: usize, level: usize) -> String {
        let q = self.subsystems[i].qubits;
        (0..q).map(|b| if (level >> (q - 1 - b)) & 1 == 1 { '1' } else { '0' }).collect()
    }

    /// Register index of the basis state with per-subsystem `levels`.
    pub fn encode_index(&self, levels: &[usize]) -> usize {
        compose(levels, &self.padded_dims())
    }

    /// Per-subsystem levels of a register index, or `None` if the index
    /// lies outside the encoded subspace.
    pub fn decode_index(&self, index: usize) -> Option<Vec<usize>> {
        let mut levels = vec![0; self.subsystems.len()];
        digits(index, &self.padded_dims(), &mut levels);
        levels.iter().zip(&self.subsystems).all(|(&l, s)| l < s.dim).then_some(levels)
    }

    pub fn is_used(&self, index: usize) -> bool {
        self.decode_index(index).is_some()
    }

    pub fn encode(&self, v: &ComplexVector) -> Result<ComplexVector> {
        let dims = self.dims();
        let logical: usize = dims.iter().product();
        if v.dim() != logical {
            return Err(Error::DimensionMismatch { expected: logical, found: v.dim() });
        }
        let mut out = ComplexVector::zeros(1 << self.total_qubits());
        let mut levels = vec![0; dims.len()];
        for (i, amp) in v.entries().iter().enumerate() {
            digits(i, &dims, &mut levels);
            out[self.encode_index(&levels)] = *amp;
        }
        Ok(out)
    }

    /// Inverse of [`encode`](Self::encode); amplitudes outside the encoded
    /// subspace are dropped.
    pub fn decode(&self, v: &ComplexVector) -> Result<ComplexVector> {
        let width = 1 << self.total_qubits();
        if v.dim() != width {
            return Err(Error::DimensionMismatch { expected: width, found: v.dim() });
        }
        let dims = self.dims();
        let mut out = ComplexVector::zeros(dims.iter().product());
        for (i, amp) in v.entries().iter().enumerate() {
            if let Some(levels) = self.decode_index(i) {
                out[compose(&levels, &dims)] = *amp;
            }
        }
        Ok(out)
    }

    /// Largest amplitude magnitude outside the encoded subspace.
    pub fn leakage(&self, v: &ComplexVector) -> f64 {
        v.entries().iter().enumerate().filter(|(i, _)| !self.is_used(*i)).map(|(_, a)| a.norm()).fold(0.0, f64::max)
    }
}

/// A pure state over several qudit registers, register 0 most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub vector: ComplexVector,
    pub system_dims: Vec<usize>,
}

impl JointState {
    pub fn encoding(&self) -> QuditEncoding {
        QuditEncoding::new(&self.system_dims)
    }
}

fn check_input(dim: usize, psi0: &ComplexVector) -> Result<()> {
    if psi0.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: psi0.dim() });
    }
    if !psi0.is_normalized(NORM_TOL) {
        return Err(Error::NotNormalized { norm: psi0.norm() });
    }
    Ok(())
}

/// `∑_j (M_j|ψ⟩) ⊗ |j⟩` without checking completeness; its norm is
/// `⟨ψ|∑_j M_j†M_j|ψ⟩^{1/2}`.
pub fn dilate_unchecked(p: &Povm, psi0: &ComplexVector) -> Result<ComplexVector> {
    if psi0.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: psi0.dim() });
    }
    let n = p.len();
    let mut out = ComplexVector::zeros(p.dim() * n);
    for (j, m) in p.elements().iter().enumerate() {
        let branch = m.apply(psi0)?;
        for (a, amp) in branch.entries().iter().enumerate() {
            out[a * n + j] = *amp;
        }
    }
    Ok(out)
}

/// Joint state `|Ψ⟩_AB` for a complete POVM and normalized input.
pub fn joint_state(p: &Povm, psi0: &ComplexVector) -> Result<JointState> {
    validate_completeness(p, COMPLETENESS_TOL)?.into_result()?;
    check_input(p.dim(), psi0)?;
    Ok(JointState { vector: dilate_unchecked(p, psi0)?, system_dims: vec![p.dim(), p.len()] })
}

/// Purification `∑_{j,k} M_{j,k}|ψ⟩ ⊗ |j⟩_J ⊗ |k⟩_{E_j} ⊗ |j⟩_{E_J}` over
/// registers `(A, J, E_j, E_J)`. `E_j` has as many levels as the largest branch.
pub fn instrument_purification(instr: &QuantumInstrument, psi0: &ComplexVector) -> Result<JointState> {
    instr.validate(COMPLETENESS_TOL)?.into_result()?;
    check_input(instr.dim(), psi0)?;
    let dims = vec![instr.dim(), instr.branch_count(), instr.max_kraus(), instr.branch_count()];
    let mut out = ComplexVector::zeros(dims.iter().product());
    for (j, branch) in instr.branches().iter().enumerate() {
        for (k, m) in branch.iter().enumerate() {
            let amps = m.apply(psi0)?;
            for (a, amp) in amps.entries().iter().enumerate() {
                out[compose(&[a, j, k, j], &dims)] = *amp;
            }
        }
    }
    Ok(JointState { vector: out, system_dims: dims })
}

/// Embeds every register into whole qubits; unused basis states get exactly 0.
pub fn encode_to_qubits(s: &JointState) -> (ComplexVector, QuditEncoding) {
    let enc = s.encoding();
    let v = enc.encode(&s.vector).expect("joint state matches its own dims");
    (v, enc)
}

/// The dilation isometry `V` with `V|k⟩ = ∑_j (M_j|k⟩) ⊗ |j⟩`, built from the
/// operator blocks directly: `V[(a·n + j), k] = M_j[a, k]`.
pub fn isometry_matrix(p: &Povm) -> Result<ComplexMatrix> {
    validate_completeness(p, COMPLETENESS_TOL)?.into_result()?;
    let (d, n) = (p.dim(), p.len());
    let mut v = ComplexMatrix::zeros(d * n, d);
    for (j, m) in p.elements().iter().enumerate() {
        for a in 0..d {
            for k in 0..d {
                v[(a * n + j, k)] = m[(a, k)];
            }
        }
    }
    Ok(v)
}

/// Reorders register qubits: qubit `i` of the result is qubit `perm[i]` of `v`.
pub fn permute_qubits(v: &ComplexVector, perm: &[usize]) -> Result<ComplexVector> {
    let n = perm.len();
    if v.dim() != 1 << n {
        return Err(Error::DimensionMismatch { expected: 1 << n, found: v.dim() });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation of 0..{n}")));
        }
    }
    let mut out = ComplexVector::new(vec![ZERO; v.dim()]);
    for (old, amp) in v.entries().iter().enumerate() {
        let mut new = 0;
        for (i, &p) in perm.iter().enumerate() {
            let bit = (old >> (n - 1 - p)) & 1;
            new |= bit << (n - 1 - i);
        }
        out[new] = *amp;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{partial_trace, ONE};
    use crate::povm::{instrument_output, outcome_probabilities, post_measurement_state, DensityMatrix};
    use crate::{presets, random};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ancilla_marginal(s: &JointState) -> Vec<f64> {
        let (da, n) = (s.system_dims[0], s.system_dims[1]);
        (0..n).map(|j| (0..da).map(|a| s.vector[a * n + j].norm_sqr()).sum()).collect()
    }

    #[test]
    fn qubit_counts() {
        assert_eq!([1, 2, 3, 4, 5, 8, 9].map(qubits_for), [0, 1, 2, 2, 3, 3, 4]);
    }

    #[test]
    fn ex1_joint_state() {
        let s = joint_state(&presets::ex1(), &ComplexVector::basis(2, 0)).unwrap();
        let k = 2f64.powf(-1.5);
        let r3 = 3f64.sqrt();
        // |00⟩ + |01⟩ + √3|10⟩ − √3|11⟩
        let want = ComplexVector::from_real(&[k, k, r3 * k, -r3 * k]);
        assert!(s.vector.max_abs_diff(&want) < 1e-15);
        assert_eq!(s.system_dims, [2, 2]);
    }

    #[test]
    fn ex2_joint_state_amplitudes() {
        let s = joint_state(&presets::ex2(), &ComplexVector::basis(2, 0)).unwrap();
        let (v, enc) = encode_to_qubits(&s);
        let a = (2.0f64 / 3.0).sqrt();
        let mut want = vec![0.0; 8];
        want[0b000] = a;
        want[0b001] = a / 4.0;
        want[0b010] = a / 4.0;
        want[0b101] = 2f64.sqrt() / 4.0;
        want[0b110] = -2f64.sqrt() / 4.0;
        assert!(v.max_abs_diff(&ComplexVector::from_real(&want)) < 1e-15);
        assert_eq!(enc.total_qubits(), 3);
    }

    #[test]
    fn deterministic_outcome() {
        let s = joint_state(&Povm::computational_basis(2), &ComplexVector::basis(2, 0)).unwrap();
        assert_eq!(s.vector, ComplexVector::basis(4, 0));
    }

    #[test]
    fn ex3_joint_state() {
        let s = joint_state(&presets::ex3(), &presets::ex3_input()).unwrap();
        assert_eq!(s.vector.dim(), 9);
        let marg = ancilla_marginal(&s);
        for (g, w) in marg.iter().zip([1.0 / 6.0, 0.5, 1.0 / 3.0]) {
            assert!((g - w).abs() < 1e-12);
        }
        // α = (√3 − 3i)/12, β = (√3 + i)/4, γ = (√3 − 3i)/6
        let alpha = c(3f64.sqrt(), -3.0) / 12.0;
        let beta = c(3f64.sqrt(), 1.0) / 4.0;
        let gamma = c(3f64.sqrt(), -3.0) / 6.0;
        let at = |a: usize, b: usize| s.vector[a * 3 + b];
        assert!((at(0, 0) - alpha).norm() < 1e-12 && (at(2, 0) - alpha).norm() < 1e-12);
        assert!((at(0, 1) - beta).norm() < 1e-12 && (at(2, 1) + beta).norm() < 1e-12);
        assert!((at(1, 2) + gamma).norm() < 1e-12);
    }

    #[test]
    fn unvalidated_povm_rejected() {
        let half = Povm::new(vec![presets::ex1().elements()[0].clone()]).unwrap();
        assert!(matches!(joint_state(&half, &ComplexVector::basis(2, 0)), Err(Error::Incomplete { .. })));
        assert!(matches!(
            joint_state(&presets::ex1(), &ComplexVector::basis(3, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            joint_state(&presets::ex1(), &ComplexVector::from_real(&[1.0, 1.0])),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn instrument_purification_example() {
        let s = instrument_purification(&presets::instrument(), &ComplexVector::basis(2, 0)).unwrap();
        assert_eq!(s.system_dims, [2, 2, 2, 2]);
        let mut want = vec![0.0; 16];
        want[0b0000] = 1.0;
        want[0b0010] = 0.5;
        want[0b1010] = 0.5;
        want[0b0111] = 0.5;
        want[0b1111] = -0.5;
        let want = ComplexVector::from_real(&want).scale(c(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        assert!(s.vector.max_abs_diff(&want) < 1e-15);

        let gamma = partial_trace(&s.vector.projector(), &s.system_dims, &[0, 1]).unwrap();
        assert!(gamma.max_abs_diff(&presets::instrument_gamma()) < 1e-12);
    }

    #[test]
    fn single_branch_identity_purification() {
        let id = QuantumInstrument::new(vec![vec![ComplexMatrix::identity(2)]]).unwrap();
        let psi = ComplexVector::from_real(&[0.6, 0.8]);
        let s = instrument_purification(&id, &psi).unwrap();
        assert_eq!(s.system_dims, [2, 1, 1, 1]);
        assert_eq!(s.vector, psi);
    }

    #[test]
    fn random_instrument_purification_traces_to_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let instr = random::instrument(&mut rng, 3, &[1, 3]);
            let psi = random::haar_state(&mut rng, 3);
            let s = instrument_purification(&instr, &psi).unwrap();
            assert!((s.vector.norm() - 1.0).abs() < 1e-10);
            let reduced = partial_trace(&s.vector.projector(), &s.system_dims, &[0, 1]).unwrap();
            let want = instrument_output(&instr, &DensityMatrix::from_pure(&psi).unwrap()).unwrap();
            assert!(reduced.max_abs_diff(&want) < 1e-10);
        }
    }

    #[test]
    fn encoding_examples() {
        let enc = QuditEncoding::new(&[3, 3]);
        assert_eq!(enc.total_qubits(), 4);
        let used = (0..16).filter(|&i| enc.is_used(i)).count();
        assert_eq!(16 - used, 7);
        assert_eq!(enc.level_bits(1, 2), "10");
        assert_eq!(enc.qubit_range(1), 2..4);

        let enc = QuditEncoding::new(&[2, 2]);
        let v = ComplexVector::from_real(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(enc.encode(&v).unwrap(), v);
    }

    #[test]
    fn ex3_encoded_layout() {
        // |1⟩_A ⊗ |2⟩_B lands on |01⟩_ab |10⟩_cd.
        let s = joint_state(&presets::ex3(), &presets::ex3_input()).unwrap();
        let (v, enc) = encode_to_qubits(&s);
        let gamma = c(3f64.sqrt(), -3.0) / 6.0;
        assert!((v[0b0110] + gamma).norm() < 1e-12);
        assert_eq!(enc.leakage(&v), 0.0);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ex4_encoded_state() {
        let s = joint_state(&presets::ex4(), &ComplexVector::basis(4, 0)).unwrap();
        let (v, enc) = encode_to_qubits(&s);
        assert_eq!(enc.total_qubits(), 4);
        // Independent recomputation from the Bell-basis definitions.
        let r6 = 6f64.sqrt();
        let r2 = 2f64.sqrt();
        let mut want = vec![0.0; 16];
        let mut put = |ab: usize, cd: usize, x: f64| want[ab * 4 + cd] = x;
        put(0b00, 0, 1.0 / r6);
        put(0b11, 0, 1.0 / r6);
        put(0b00, 1, 1.0 / (4.0 * r6));
        put(0b11, 1, 1.0 / (4.0 * r6));
        put(0b01, 1, 1.0 / (4.0 * r2));
        put(0b10, 1, 1.0 / (4.0 * r2));
        put(0b00, 2, 1.0 / (4.0 * r6));
        put(0b11, 2, 1.0 / (4.0 * r6));
        put(0b01, 2, -1.0 / (4.0 * r2));
        put(0b10, 2, -1.0 / (4.0 * r2));
        put(0b00, 3, 0.5);
        put(0b11, 3, -0.5);
        assert!(v.max_abs_diff(&ComplexVector::from_real(&want)) < 1e-15);
    }

    #[test]
    fn isometry_examples() {
        let v = isometry_matrix(&Povm::computational_basis(2)).unwrap();
        assert_eq!((v.rows(), v.cols()), (4, 2));
        assert!(v.entries().iter().all(|z| *z == ONE || *z == ZERO));

        let v = isometry_matrix(&presets::ex1()).unwrap();
        assert!(v.adjoint().matmul(&v).unwrap().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);

        let id = Povm::new(vec![ComplexMatrix::identity(3)]).unwrap();
        assert_eq!(isometry_matrix(&id).unwrap(), ComplexMatrix::identity(3));
    }

    #[test]
    fn isometry_columns_are_joint_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let (d, n) = (rng.random_range(2..=4), rng.random_range(2..=4));
            let p = random::povm(&mut rng, d, n);
            let v = isometry_matrix(&p).unwrap();
            assert!(v.adjoint().matmul(&v).unwrap().max_abs_diff(&ComplexMatrix::identity(d)) < 1e-10);
            for k in 0..d {
                let col = joint_state(&p, &ComplexVector::basis(d, k)).unwrap();
                assert!(col.vector.max_abs_diff(&v.column(k)) < 1e-15);
            }
        }
    }

    #[test]
    fn protocol_statistics_and_post_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let (d, n) = (rng.random_range(2..=4), rng.random_range(2..=4));
            let p = random::povm(&mut rng, d, n);
            let psi = random::haar_state(&mut rng, d);
            let s = joint_state(&p, &psi).unwrap();
            assert!((s.vector.norm() - 1.0).abs() < 1e-10);

            let rho = DensityMatrix::from_pure(&psi).unwrap();
            let born = outcome_probabilities(&p, &rho).unwrap();
            for (g, w) in ancilla_marginal(&s).iter().zip(&born) {
                assert!((g - w).abs() < 1e-12);
            }
            for j in 0..n {
                let cond = ComplexVector::new((0..d).map(|a| s.vector[a * n + j]).collect());
                let cond = cond.normalized().unwrap();
                let post = post_measurement_state(&p, j, &rho).unwrap();
                assert!(cond.projector().max_abs_diff(post.matrix()) < 1e-10);
            }
        }
    }

    #[test]
    fn incompleteness_breaks_normalization_proportionally() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let p = random::povm(&mut rng, 3, 3);
            let psi = random::haar_state(&mut rng, 3);
            let scale = rng.random_range(0.5..1.5);
            let mut elements = p.elements().to_vec();
            let j = rng.random_range(0..3);
            elements[j] = elements[j].scale(c(scale, 0.0));
            let perturbed = Povm::new(elements).unwrap();
            let v = dilate_unchecked(&perturbed, &psi).unwrap();
            let pj = outcome_probabilities(&p, &DensityMatrix::from_pure(&psi).unwrap()).unwrap()[j];
            let want = 1.0 + (scale * scale - 1.0) * pj;
            assert!((v.norm_sqr() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn encode_decode_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for dims in [vec![3, 3], vec![2, 3, 5], vec![4, 4], vec![1, 3]] {
            let enc = QuditEncoding::new(&dims);
            let v = random::haar_state(&mut rng, dims.iter().product());
            let e = enc.encode(&v).unwrap();
            assert_eq!(enc.leakage(&e), 0.0);
            assert!((e.norm() - v.norm()).abs() < 1e-15);
            assert_eq!(enc.decode(&e).unwrap(), v);
        }
    }

    #[test]
    fn qubit_permutation() {
        // |01⟩ with qubits swapped becomes |10⟩.
        let v = ComplexVector::basis(4, 0b01);
        assert_eq!(permute_qubits(&v, &[1, 0]).unwrap(), ComplexVector::basis(4, 0b10));
        let v = ComplexVector::basis(8, 0b110);
        assert_eq!(permute_qubits(&v, &[2, 0, 1]).unwrap(), ComplexVector::basis(8, 0b011));
        assert!(permute_qubits(&v, &[0, 0, 1]).is_err());
    }
}
