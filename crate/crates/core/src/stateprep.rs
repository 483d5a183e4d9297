//! State-preparation compiler.
//!
//! A target vector on `n` qubits is disentangled one qubit at a time, least
//! significant first. Each step records, for every basis value of the
//! remaining (more significant) qubits, the `RY` angle that fixes the
//! magnitudes of the pair and the `RZ` angle that fixes their relative phase.
//! Replaying the steps in reverse as uniformly controlled rotations prepares
//! the target from `|0…0⟩`. Each uniformly controlled rotation with `k`
//! controls is lowered to `2^k` rotations and `2^k` CNOTs along a Gray-code
//! walk, so the total CNOT count is at most `2^{n+1} − 4`.

use num_complex::Complex64;

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::ComplexVector;

const NORM_TOL: f64 = 1e-10;
/// Rotations smaller than this are dropped by [`elide`].
pub const ELISION_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Y,
    Z,
}

impl Axis {
    fn gate(self, qubit: usize, theta: f64) -> Gate {
        match self {
            Axis::Y => Gate::Ry { qubit, theta },
            Axis::Z => Gate::Rz { qubit, theta },
        }
    }
}

/// One disentangling step.
#[derive(Clone, Debug, PartialEq)]
pub struct Disentangled {
    /// Indexed by the basis value of the other qubits, in register order.
    pub ry_angles: Vec<f64>,
    pub rz_angles: Vec<f64>,
    /// State of the other qubits once `qubit` has been rotated to `|0⟩`.
    pub reduced: ComplexVector,
}

fn log2_exact(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Factors `qubit` out of `amplitudes` (a `2^n` vector, qubit 0 most significant).
pub fn disentangle_angles(amplitudes: &ComplexVector, qubit: usize) -> Result<Disentangled> {
    let n = log2_exact(amplitudes.dim())?;
    if qubit >= n {
        return Err(Error::QubitOutOfRange { qubit, width: n });
    }
    let shift = n - 1 - qubit;
    let low_mask = (1usize << shift) - 1;
    let branches = amplitudes.dim() / 2;
    let mut ry = Vec::with_capacity(branches);
    let mut rz = Vec::with_capacity(branches);
    let mut reduced = Vec::with_capacity(branches);
    for b in 0..branches {
        let even = ((b & !low_mask) << 1) | (b & low_mask);
        let odd = even | (1 << shift);
        let (a0, a1) = (amplitudes[even], amplitudes[odd]);
        let (m0, m1) = (a0.norm(), a1.norm());
        // A zero child borrows its sibling's phase so that no Z rotation is needed.
        let (p0, p1) = match (m0 > 0.0, m1 > 0.0) {
            (true, true) => (a0.arg(), a1.arg()),
            (true, false) => (a0.arg(), a0.arg()),
            (false, true) => (a1.arg(), a1.arg()),
            (false, false) => (0.0, 0.0),
        };
        ry.push(2.0 * m1.atan2(m0));
        rz.push(p1 - p0);
        reduced.push(Complex64::from_polar(m0.hypot(m1), (p0 + p1) / 2.0));
    }
    Ok(Disentangled { ry_angles: ry, rz_angles: rz, reduced: ComplexVector::new(reduced) })
}

/// Lowers a uniformly controlled rotation to single-qubit rotations and CNOTs.
///
/// `angles[b]` is applied when the controls hold basis value `b`, with
/// `controls[0]` the most significant bit of `b`.
pub fn decompose_multiplexor(angles: &[f64], axis: Axis, controls: &[usize], target: usize) -> Result<Vec<Gate>> {
    let k = controls.len();
    if angles.len() != 1 << k {
        return Err(Error::NotPowerOfTwo(angles.len()));
    }
    if k == 0 {
        return Ok(vec![axis.gate(target, angles[0])]);
    }
    let size = angles.len();
    let scale = 1.0 / size as f64;
    let gray = |i: usize| i ^ (i >> 1);
    let mut gates = Vec::with_capacity(2 * size);
    for i in 0..size {
        let g = gray(i);
        let theta =
            angles.iter().enumerate().map(|(b, a)| if (b & g).count_ones() % 2 == 0 { *a } else { -*a }).sum::<f64>()
                * scale;
        gates.push(axis.gate(target, theta));
        // Bit that flips on the way to the next Gray code, wrapping to the start.
        let bit = if i + 1 < size { (i + 1).trailing_zeros() as usize } else { k - 1 };
        gates.push(Gate::Cnot { control: controls[k - 1 - bit], target });
    }
    Ok(gates)
}

/// Drops near-zero rotations and cancels CNOTs that become redundant.
///
/// Consecutive CNOTs sharing a target commute, so within such a run only
/// controls used an odd number of times survive.
pub fn elide(gates: &[Gate]) -> Vec<Gate> {
    let mut current: Vec<Gate> =
        gates.iter().copied().filter(|g| g.angle().is_none_or(|t| t.abs() >= ELISION_TOL)).collect();
    loop {
        let mut out = Vec::with_capacity(current.len());
        let mut i = 0;
        while i < current.len() {
            let Gate::Cnot { target, .. } = current[i] else {
                out.push(current[i]);
                i += 1;
                continue;
            };
            let mut controls: Vec<(usize, usize)> = Vec::new();
            while let Some(Gate::Cnot { control, target: t }) = current.get(i).copied() {
                if t != target {
                    break;
                }
                match controls.iter_mut().find(|(c, _)| *c == control) {
                    Some(entry) => entry.1 += 1,
                    None => controls.push((control, 1)),
                }
                i += 1;
            }
            out.extend(
                controls.into_iter().filter(|(_, n)| n % 2 == 1).map(|(control, _)| Gate::Cnot { control, target }),
            );
        }
        if out.len() == current.len() {
            return out;
        }
        current = out;
    }
}

/// Compiles a normalized `2^n` vector into a circuit preparing it from `|0…0⟩`.
pub fn prepare_state(target: &ComplexVector) -> Result<Circuit> {
    let n = log2_exact(target.dim())?;
    if !target.is_normalized(NORM_TOL) {
        return Err(Error::NotNormalized { norm: target.norm() });
    }
    let mut stages = Vec::with_capacity(n);
    let mut amps = target.clone();
    for q in (0..n).rev() {
        let step = disentangle_angles(&amps, q)?;
        stages.push((q, step.ry_angles, step.rz_angles));
        amps = step.reduced;
    }
    let mut raw = Vec::new();
    let controls: Vec<usize> = (0..n).collect();
    for (q, ry, rz) in stages.into_iter().rev() {
        for (angles, axis) in [(ry, Axis::Y), (rz, Axis::Z)] {
            if angles.iter().all(|a| a.abs() < ELISION_TOL) {
                continue;
            }
            raw.extend(decompose_multiplexor(&angles, axis, &controls[..q], q)?);
        }
    }
    Circuit::from_gates(n, elide(&raw), amps[0].arg())
}
