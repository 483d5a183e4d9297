//! Linear-inversion state tomography over Pauli measurement settings.
//!
//! Each of the `3^m` settings rotates every target qubit into the X, Y or Z
//! eigenbasis and reads the joint outcome distribution. Every Pauli string
//! expectation is the average over all settings compatible with it, and
//! `ρ = 2^{-m} ∑_P ⟨P⟩ P`. The estimate is then projected onto the density
//! matrices by clipping negative eigenvalues and renormalizing the trace.

use num_complex::Complex64;

use super::measure::sample_distribution;
use super::{marginal_probabilities, rng, run_circuit, StateVector};
use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Tensor};
use crate::povm::DensityMatrix;

/// Something that can hand out fresh copies of the state to be measured.
pub trait StatePreparation {
    fn prepare(&self) -> Result<StateVector>;
}

impl StatePreparation for StateVector {
    fn prepare(&self) -> Result<StateVector> {
        Ok(self.clone())
    }
}

impl StatePreparation for Circuit {
    fn prepare(&self) -> Result<StateVector> {
        run_circuit(self, None)
    }
}

impl<F: Fn() -> Result<StateVector>> StatePreparation for F {
    fn prepare(&self) -> Result<StateVector> {
        self()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TomographyMode {
    /// Analytic outcome probabilities (the infinite-shot limit).
    Exact,
    /// Each setting sampled with its own seed derived from `seed`.
    Shots { shots_per_setting: u64, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Basis {
    X,
    Y,
    Z,
}

fn basis_change(b: Basis, qubit: usize) -> Vec<Gate> {
    use std::f64::consts::FRAC_PI_2;
    match b {
        Basis::X => vec![Gate::Ry { qubit, theta: -FRAC_PI_2 }],
        Basis::Y => vec![Gate::Phase { qubit, theta: -FRAC_PI_2 }, Gate::Ry { qubit, theta: -FRAC_PI_2 }],
        Basis::Z => vec![],
    }
}

fn pauli(p: u8) -> ComplexMatrix {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let rows = match p {
        0 => [[o, z], [z, o]],
        1 => [[z, o], [o, z]],
        2 => [[z, -i], [i, z]],
        _ => [[o, z], [z, -o]],
    };
    ComplexMatrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()]).unwrap()
}

/// Decodes `index` into `m` base-`radix` digits, position 0 most significant.
fn base_digits(mut index: usize, radix: usize, m: usize) -> Vec<usize> {
    let mut d = vec![0; m];
    for slot in d.iter_mut().rev() {
        *slot = index % radix;
        index /= radix;
    }
    d
}

pub fn tomography(source: &impl StatePreparation, qubits: &[usize], mode: TomographyMode) -> Result<DensityMatrix> {
    let m = qubits.len();
    if m == 0 {
        return Err(Error::InvalidArgument("tomography needs at least one qubit".into()));
    }
    let settings = 3usize.pow(m as u32);
    let mut distributions = Vec::with_capacity(settings);
    for s in 0..settings {
        let bases: Vec<Basis> = base_digits(s, 3, m).into_iter().map(|d| [Basis::X, Basis::Y, Basis::Z][d]).collect();
        let mut state = source.prepare()?;
        for (&q, &b) in qubits.iter().zip(&bases) {
            for g in basis_change(b, q) {
                state.apply(&g)?;
            }
        }
        let probs = marginal_probabilities(&state, qubits)?;
        let dist = match mode {
            TomographyMode::Exact => probs,
            TomographyMode::Shots { shots_per_setting, seed } => {
                if shots_per_setting == 0 {
                    return Err(Error::InvalidArgument("shots must be at least 1".into()));
                }
                let counts = sample_distribution(&probs, shots_per_setting, rng::derive_seed(seed, s as u64));
                counts.into_iter().map(|c| c as f64 / shots_per_setting as f64).collect()
            }
        };
        distributions.push((bases, dist));
    }

    let dim = 1 << m;
    let mut rho = ComplexMatrix::zeros(dim, dim);
    for p in 0..4usize.pow(m as u32) {
        // 0 = I, 1 = X, 2 = Y, 3 = Z per qubit.
        let string: Vec<u8> = base_digits(p, 4, m).into_iter().map(|d| d as u8).collect();
        let mut total = 0.0;
        let mut n = 0usize;
        for (bases, dist) in &distributions {
            let compatible = string.iter().zip(bases).all(|(&op, &b)| {
                op == 0 || (op == 1 && b == Basis::X) || (op == 2 && b == Basis::Y) || (op == 3 && b == Basis::Z)
            });
            if !compatible {
                continue;
            }
            let mask = string
                .iter()
                .enumerate()
                .filter(|(_, &op)| op != 0)
                .fold(0usize, |acc, (i, _)| acc | (1 << (m - 1 - i)));
            total += dist
                .iter()
                .enumerate()
                .map(|(o, &pr)| if (o & mask).count_ones() % 2 == 0 { pr } else { -pr })
                .sum::<f64>();
            n += 1;
        }
        let expectation = total / n as f64;
        if expectation == 0.0 {
            continue;
        }
        let op = string.iter().skip(1).fold(pauli(string[0]), |acc, &s| acc.tensor(&pauli(s)));
        rho = rho.add(&op.scale(Complex64::new(expectation / dim as f64, 0.0)))?;
    }
    project_to_density(&rho)
}

/// Nearest-by-clipping density matrix: negative eigenvalues set to zero, trace
/// renormalized to one.
pub fn project_to_density(m: &ComplexMatrix) -> Result<DensityMatrix> {
    let (values, vectors) = m.hermitian_eigen()?;
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidDensityMatrix("no positive spectrum to project onto".into()));
    }
    let diag = ComplexMatrix::diagonal(&clipped.iter().map(|&v| Complex64::new(v / total, 0.0)).collect::<Vec<_>>());
    DensityMatrix::new(vectors.matmul(&diag)?.matmul(&vectors.adjoint())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::{encode_to_qubits, instrument_purification};
    use crate::linalg::ComplexVector;
    use crate::stateprep::prepare_state;
    use crate::{presets, random};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_zero_state() {
        let rho = tomography(&StateVector::zero(1), &[0], TomographyMode::Exact).unwrap();
        assert!(rho.matrix().max_abs_diff(&ComplexVector::basis(2, 0).projector()) < 1e-14);
    }

    #[test]
    fn exact_instrument_reconstruction() {
        let s = instrument_purification(&presets::instrument(), &ComplexVector::basis(2, 0)).unwrap();
        let (v, _) = encode_to_qubits(&s);
        let circuit = prepare_state(&v).unwrap();
        let rho = tomography(&circuit, &[0, 1], TomographyMode::Exact).unwrap();
        assert!(rho.matrix().max_abs_diff(&presets::instrument_gamma()) < 1e-10);
    }

    #[test]
    fn sampled_plus_state_fidelity() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = ComplexVector::from_real(&[h, h]);
        let s = StateVector::from_amplitudes(plus.clone()).unwrap();
        let rho = tomography(&s, &[0], TomographyMode::Shots { shots_per_setting: 8192, seed: 5 }).unwrap();
        assert!(rho.fidelity_with_pure(&plus).unwrap() >= 0.98);
    }

    #[test]
    fn sampled_tomography_is_seed_deterministic() {
        let s = StateVector::from_amplitudes(ComplexVector::from_real(&[0.6, 0.0, 0.0, 0.8])).unwrap();
        let mode = TomographyMode::Shots { shots_per_setting: 500, seed: 9 };
        let a = tomography(&s, &[0, 1], mode).unwrap();
        let b = tomography(&s, &[0, 1], mode).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_mode_inverts_preparation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for m in 1..=3 {
            for _ in 0..5 {
                let v = random::haar_state(&mut rng, 1 << m);
                let s = StateVector::from_amplitudes(v.clone()).unwrap();
                let qubits: Vec<usize> = (0..m).collect();
                let rho = tomography(&s, &qubits, TomographyMode::Exact).unwrap();
                assert!(rho.matrix().max_abs_diff(&v.projector()) < 1e-10);
            }
        }
    }

    #[test]
    fn reduced_state_of_subset() {
        // Tomography of qubit 1 of a Bell pair is maximally mixed.
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = StateVector::from_amplitudes(ComplexVector::from_real(&[h, 0.0, 0.0, h])).unwrap();
        let rho = tomography(&s, &[1], TomographyMode::Exact).unwrap();
        let half = ComplexMatrix::identity(2).scale(Complex64::new(0.5, 0.0));
        assert!(rho.matrix().max_abs_diff(&half) < 1e-12);
    }

    #[test]
    fn projection_clips_negative_eigenvalues() {
        let m = ComplexMatrix::diagonal(&[Complex64::new(1.1, 0.0), Complex64::new(-0.1, 0.0)]);
        let rho = project_to_density(&m).unwrap();
        assert!(rho.matrix().max_abs_diff(&ComplexVector::basis(2, 0).projector()) < 1e-12);
    }

    #[test]
    fn empty_qubit_list_rejected() {
        assert!(tomography(&StateVector::zero(1), &[], TomographyMode::Exact).is_err());
    }
}
