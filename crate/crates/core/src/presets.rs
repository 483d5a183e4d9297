//! Built-in measurement models and input states: the four worked POVMs, the
//! two-branch qubit instrument, and the named input states the CLI accepts.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::linalg::{ComplexMatrix, ComplexVector};
use crate::povm::{Povm, QuantumInstrument};

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn labelled(elements: Vec<ComplexMatrix>) -> Povm {
    let labels = (1..=elements.len()).map(|j| format!("M{j}")).collect();
    Povm::new(elements).and_then(|p| p.with_labels(labels)).expect("preset is well formed")
}

/// `cos(θ/2)|0⟩ + sin(θ/2)|1⟩`
pub fn bloch_xz(theta: f64) -> ComplexVector {
    ComplexVector::from_real(&[(theta / 2.0).cos(), (theta / 2.0).sin()])
}

/// Bell basis on two qubits, standard convention.
pub fn phi_plus() -> ComplexVector {
    ComplexVector::from_real(&[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2])
}

pub fn phi_minus() -> ComplexVector {
    ComplexVector::from_real(&[FRAC_1_SQRT_2, 0.0, 0.0, -FRAC_1_SQRT_2])
}

pub fn psi_plus() -> ComplexVector {
    ComplexVector::from_real(&[0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0])
}

pub fn psi_minus() -> ComplexVector {
    ComplexVector::from_real(&[0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0])
}

/// One-qubit two-element POVM, `M_{1,2} = (|0⟩⟨0| ± √3|1⟩⟨0| + 2|1⟩⟨1|)/(2√2)`.
pub fn ex1() -> Povm {
    let s = 1.0 / (2.0 * 2f64.sqrt());
    let r3 = 3f64.sqrt();
    labelled(vec![
        ComplexMatrix::from_real(2, 2, &[s, 0.0, r3 * s, 2.0 * s]).unwrap(),
        ComplexMatrix::from_real(2, 2, &[s, 0.0, -r3 * s, 2.0 * s]).unwrap(),
    ])
}

/// Trine POVM in the xz plane of the Bloch sphere.
pub fn ex2() -> Povm {
    let w = re((2.0f64 / 3.0).sqrt());
    labelled([0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0].iter().map(|&t| bloch_xz(t).projector().scale(w)).collect())
}

/// Qutrit POVM `{(|0⟩±|2⟩)(⟨0|±⟨2|)/2, |1⟩⟨1|}`.
pub fn ex3() -> Povm {
    let h = FRAC_1_SQRT_2;
    let plus = ComplexVector::from_real(&[h, 0.0, h]);
    let minus = ComplexVector::from_real(&[h, 0.0, -h]);
    labelled(vec![plus.projector(), minus.projector(), ComplexVector::basis(3, 1).projector()])
}

/// `(|0⟩ + ω|1⟩ + ω²|2⟩)/√3`, `ω = e^{2πi/3}`.
pub fn ex3_input() -> ComplexVector {
    fourier_state(3)
}

/// Two-qubit four-element POVM built on the Bell basis.
pub fn ex4() -> Povm {
    let w = re((2.0f64 / 3.0).sqrt());
    let mixed = |theta: f64| {
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let v: Vec<Complex64> =
            phi_plus().entries().iter().zip(psi_plus().entries()).map(|(a, b)| a * c + b * s).collect();
        ComplexVector::new(v)
    };
    labelled(vec![
        phi_plus().projector().scale(w),
        mixed(2.0 * PI / 3.0).projector().scale(w),
        mixed(4.0 * PI / 3.0).projector().scale(w),
        phi_minus().projector().add(&psi_minus().projector()).unwrap(),
    ])
}

/// Two-branch qubit instrument:
/// `ε₀ = {|0⟩⟨0|, |+⟩⟨+|}/√2`, `ε₁ = {|1⟩⟨1|, |−⟩⟨−|}/√2`.
pub fn instrument() -> QuantumInstrument {
    let h = FRAC_1_SQRT_2;
    let k = re(h);
    let proj = |v: &[f64]| ComplexVector::from_real(v).projector().scale(k);
    QuantumInstrument::new(vec![vec![proj(&[1.0, 0.0]), proj(&[h, h])], vec![proj(&[0.0, 1.0]), proj(&[h, -h])]])
        .expect("preset is well formed")
}

/// `Γ(|0⟩⟨0|)` of [`instrument`] on `A ⊗ J`, `A` most significant.
pub fn instrument_gamma() -> ComplexMatrix {
    #[rustfmt::skip]
    let eight_gamma = [
        5.0,  0.0, 1.0,  0.0,
        0.0,  1.0, 0.0, -1.0,
        1.0,  0.0, 1.0,  0.0,
        0.0, -1.0, 0.0,  1.0,
    ];
    ComplexMatrix::from_real(4, 4, &eight_gamma).unwrap().scale(re(1.0 / 8.0))
}

/// `(1/√d) ∑_k e^{2πik/d} |k⟩`
pub fn fourier_state(d: usize) -> ComplexVector {
    let norm = 1.0 / (d as f64).sqrt();
    ComplexVector::new((0..d).map(|k| Complex64::from_polar(norm, 2.0 * PI * k as f64 / d as f64)).collect())
}

pub fn uniform_state(d: usize) -> ComplexVector {
    ComplexVector::new(vec![re(1.0 / (d as f64).sqrt()); d])
}

/// Resolves a named input state: `zero`, `uniform`, `fourier`, or `basis:<k>`.
pub fn named_state(name: &str, d: usize) -> Option<ComplexVector> {
    match name {
        "zero" => Some(ComplexVector::basis(d, 0)),
        "uniform" => Some(uniform_state(d)),
        "fourier" => Some(fourier_state(d)),
        _ => {
            let k: usize = name.strip_prefix("basis:")?.parse().ok()?;
            (k < d).then(|| ComplexVector::basis(d, k))
        }
    }
}
