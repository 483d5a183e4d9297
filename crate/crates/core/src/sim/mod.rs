//! Statevector execution and the measurement side of the protocol: shot
//! sampling, post-selection, tomography, and readout noise.

mod measure;
pub mod readout;
pub mod rng;
pub mod tomography;

pub use measure::{bitstring, marginal_probabilities, parse_bitstring, post_select, sample_shots, ShotRecord};
pub use readout::{apply_confusion, mitigate_readout, Calibration, ConfusionModel, Mitigated};
pub use tomography::{tomography, StatePreparation, TomographyMode};

use num_complex::Complex64;

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::{ComplexVector, ONE};

/// Amplitudes of an `n`-qubit register, qubit 0 most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: ComplexVector,
    width: usize,
}

impl StateVector {
    pub fn zero(width: usize) -> Self {
        Self { amplitudes: ComplexVector::basis(1 << width, 0), width }
    }

    pub fn from_amplitudes(amplitudes: ComplexVector) -> Result<Self> {
        let dim = amplitudes.dim();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(dim));
        }
        if !amplitudes.is_normalized(1e-10) {
            return Err(Error::NotNormalized { norm: amplitudes.norm() });
        }
        Ok(Self { width: dim.trailing_zeros() as usize, amplitudes })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> ComplexVector {
        self.amplitudes
    }

    fn stride(&self, qubit: usize) -> usize {
        1 << (self.width - 1 - qubit)
    }

    /// Applies a 2×2 unitary to `qubit` in place.
    pub fn apply_1q(&mut self, qubit: usize, u: [[Complex64; 2]; 2]) {
        let stride = self.stride(qubit);
        let amps = self.amplitudes.entries_mut();
        for block in amps.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = u[0][0] * x + u[0][1] * y;
                *b = u[1][0] * x + u[1][1] * y;
            }
        }
    }

    fn apply_ry(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        let stride = self.stride(qubit);
        for block in self.amplitudes.entries_mut().chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x * c - y * s;
                *b = x * s + y * c;
            }
        }
    }

    fn apply_diagonal(&mut self, qubit: usize, d0: Complex64, d1: Complex64) {
        let stride = self.stride(qubit);
        for block in self.amplitudes.entries_mut().chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            if d0 != ONE {
                lo.iter_mut().for_each(|a| *a *= d0);
            }
            hi.iter_mut().for_each(|b| *b *= d1);
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let cmask = self.stride(control);
        let tmask = self.stride(target);
        let amps = self.amplitudes.entries_mut();
        for i in 0..amps.len() {
            if i & cmask != 0 && i & tmask == 0 {
                amps.swap(i, i | tmask);
            }
        }
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        let (a, b) = gate.qubits();
        for q in std::iter::once(a).chain(b) {
            if q >= self.width {
                return Err(Error::QubitOutOfRange { qubit: q, width: self.width });
            }
        }
        match *gate {
            Gate::Ry { qubit, theta } => self.apply_ry(qubit, theta),
            Gate::Rz { qubit, theta } => self.apply_diagonal(
                qubit,
                Complex64::from_polar(1.0, -theta / 2.0),
                Complex64::from_polar(1.0, theta / 2.0),
            ),
            Gate::Phase { qubit, theta } => self.apply_diagonal(qubit, ONE, Complex64::from_polar(1.0, theta)),
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
        }
        Ok(())
    }

    /// Multiplies every amplitude by `e^{iφ}`.
    pub fn apply_global_phase(&mut self, phase: f64) {
        if phase != 0.0 {
            let z = Complex64::from_polar(1.0, phase);
            self.amplitudes.entries_mut().iter_mut().for_each(|a| *a *= z);
        }
    }
}

/// Runs `c` on `initial` (default `|0…0⟩`), then applies the circuit's
/// global phase as a scalar.
pub fn run_circuit(c: &Circuit, initial: Option<StateVector>) -> Result<StateVector> {
    let mut state = initial.unwrap_or_else(|| StateVector::zero(c.width()));
    if state.width() != c.width() {
        return Err(Error::WidthMismatch { circuit: c.width(), state: state.width() });
    }
    for g in c.gates() {
        state.apply(g)?;
    }
    state.apply_global_phase(c.global_phase());
    Ok(state)
}
