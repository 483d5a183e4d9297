//! Measurement models: POVMs, quantum instruments, density matrices, and the
//! Born-rule reference computations every simulated result is checked against.
//!
//! Outcome indices are 0-based throughout; outcome `j` is written to ancilla
//! level `|j⟩`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{is_psd, ComplexMatrix, ComplexVector, Tensor};

pub const COMPLETENESS_TOL: f64 = 1e-10;
/// Outcomes at or below this probability cannot be conditioned on.
pub const CONDITION_THRESHOLD: f64 = 1e-12;
const NEGATIVE_CLAMP: f64 = 1e-12;
const DENSITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Checks Hermiticity, positivity and unit trace, each within 1e-10.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSquare { rows: matrix.rows(), cols: matrix.cols() });
        }
        if !matrix.is_hermitian(DENSITY_TOL) {
            return Err(Error::InvalidDensityMatrix("not Hermitian".into()));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > DENSITY_TOL || tr.im.abs() > DENSITY_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} differs from 1")));
        }
        if !is_psd(&matrix, DENSITY_TOL) {
            return Err(Error::InvalidDensityMatrix("negative eigenvalue".into()));
        }
        Ok(Self { matrix })
    }

    pub fn from_pure(psi: &ComplexVector) -> Result<Self> {
        if !psi.is_normalized(DENSITY_TOL) {
            return Err(Error::NotNormalized { norm: psi.norm() });
        }
        Ok(Self { matrix: psi.projector() })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// `⟨psi|ρ|psi⟩`
    pub fn fidelity_with_pure(&self, psi: &ComplexVector) -> Result<f64> {
        Ok(psi.inner(&self.matrix.apply(psi)?).re)
    }
}

/// An ordered list of measurement operators `M_j` on a `d`-level system.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    elements: Vec<ComplexMatrix>,
    dim: usize,
    labels: Option<Vec<String>>,
}

fn check_square_family(elements: &[ComplexMatrix]) -> Result<usize> {
    let first = elements.first().ok_or(Error::Empty)?;
    let dim = first.rows();
    for m in elements {
        if !m.is_square() {
            return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
        }
        if m.rows() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: m.rows() });
        }
    }
    Ok(dim)
}

impl Povm {
    /// Structural checks only; completeness is a separate, reportable check.
    pub fn new(elements: Vec<ComplexMatrix>) -> Result<Self> {
        let dim = check_square_family(&elements)?;
        Ok(Self { elements, dim, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.elements.len() {
            return Err(Error::DimensionMismatch { expected: self.elements.len(), found: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Projective measurement in the computational basis.
    pub fn computational_basis(dim: usize) -> Self {
        let elements = (0..dim).map(|k| ComplexVector::basis(dim, k).projector()).collect();
        Self { elements, dim, labels: None }
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, j: usize) -> String {
        match &self.labels {
            Some(l) => l[j].clone(),
            None => format!("M{}", j + 1),
        }
    }

    /// Effects `E_j = M_j† M_j`.
    pub fn effects(&self) -> Vec<ComplexMatrix> {
        self.elements.iter().map(|m| m.adjoint().matmul(m).expect("square")).collect()
    }

    fn check_state(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: rho.dim() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletenessReport {
    /// `max |∑ M_j†M_j − I|` over entries.
    pub max_deviation: f64,
    pub tolerance: f64,
    /// Smallest eigenvalue of each effect.
    pub effect_min_eigenvalues: Vec<f64>,
    pub effect_psd: Vec<bool>,
}

impl CompletenessReport {
    pub fn complete(&self) -> bool {
        self.max_deviation <= self.tolerance
    }

    pub fn passed(&self) -> bool {
        self.complete() && self.effect_psd.iter().all(|&p| p)
    }

    pub fn into_result(self) -> Result<Self> {
        if !self.complete() {
            return Err(Error::Incomplete { deviation: self.max_deviation, tolerance: self.tolerance });
        }
        if let Some(index) = self.effect_psd.iter().position(|&p| !p) {
            return Err(Error::NotPsd { index, min_eigenvalue: self.effect_min_eigenvalues[index] });
        }
        Ok(self)
    }
}

fn completeness_of(elements: &[ComplexMatrix], dim: usize, tol: f64) -> Result<CompletenessReport> {
    let mut sum = ComplexMatrix::zeros(dim, dim);
    let mut mins = Vec::with_capacity(elements.len());
    let mut psd = Vec::with_capacity(elements.len());
    for m in elements {
        let effect = m.adjoint().matmul(m)?;
        let min = effect.min_eigenvalue()?;
        mins.push(min);
        psd.push(is_psd(&effect, tol));
        sum = sum.add(&effect)?;
    }
    let max_deviation = sum.max_abs_diff(&ComplexMatrix::identity(dim));
    Ok(CompletenessReport { max_deviation, tolerance: tol, effect_min_eigenvalues: mins, effect_psd: psd })
}

pub fn validate_completeness(p: &Povm, tol: f64) -> Result<CompletenessReport> {
    check_square_family(&p.elements)?;
    completeness_of(&p.elements, p.dim, tol)
}

fn clamp_probability(outcome: usize, value: f64) -> Result<f64> {
    if value < -NEGATIVE_CLAMP {
        return Err(Error::NegativeProbability { outcome, value });
    }
    Ok(value.max(0.0))
}

/// Born-rule probabilities `Tr(M_j ρ M_j†)`.
pub fn outcome_probabilities(p: &Povm, rho: &DensityMatrix) -> Result<Vec<f64>> {
    p.check_state(rho)?;
    p.elements.iter().enumerate().map(|(j, m)| clamp_probability(j, m.conjugate(rho.matrix())?.trace().re)).collect()
}

/// `M_j ρ M_j† / Tr(M_j ρ M_j†)`
pub fn post_measurement_state(p: &Povm, j: usize, rho: &DensityMatrix) -> Result<DensityMatrix> {
    p.check_state(rho)?;
    let m = p.elements.get(j).ok_or(Error::IndexOutOfRange { index: j, len: p.len() })?;
    let unnormalized = m.conjugate(rho.matrix())?;
    let probability = unnormalized.trace().re;
    if probability <= CONDITION_THRESHOLD {
        return Err(Error::UnconditionableOutcome { outcome: j, probability });
    }
    DensityMatrix::new(unnormalized.scale(Complex64::new(1.0 / probability, 0.0)))
}

/// The unconditioned channel `∑_j M_j ρ M_j†`.
pub fn measurement_channel(p: &Povm, rho: &DensityMatrix) -> Result<ComplexMatrix> {
    p.check_state(rho)?;
    let mut acc = ComplexMatrix::zeros(p.dim, p.dim);
    for m in &p.elements {
        acc = acc.add(&m.conjugate(rho.matrix())?)?;
    }
    Ok(acc)
}

/// A quantum instrument: branch `j` is the trace non-increasing map with
/// Kraus operators `{M_{j,k}}_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumInstrument {
    branches: Vec<Vec<ComplexMatrix>>,
    dim: usize,
}

impl QuantumInstrument {
    pub fn new(branches: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        if branches.iter().any(Vec::is_empty) {
            return Err(Error::Empty);
        }
        let flat: Vec<ComplexMatrix> = branches.iter().flatten().cloned().collect();
        let dim = check_square_family(&flat)?;
        Ok(Self { branches, dim })
    }

    pub fn branches(&self) -> &[Vec<ComplexMatrix>] {
        &self.branches
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Largest Kraus count over all branches.
    pub fn max_kraus(&self) -> usize {
        self.branches.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `ε_j(ρ) = ∑_k M_{j,k} ρ M_{j,k}†`
    pub fn branch_output(&self, j: usize, rho: &DensityMatrix) -> Result<ComplexMatrix> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: rho.dim() });
        }
        let kraus = self.branches.get(j).ok_or(Error::IndexOutOfRange { index: j, len: self.branches.len() })?;
        let mut acc = ComplexMatrix::zeros(self.dim, self.dim);
        for m in kraus {
            acc = acc.add(&m.conjugate(rho.matrix())?)?;
        }
        Ok(acc)
    }

    pub fn validate(&self, tol: f64) -> Result<CompletenessReport> {
        let flat: Vec<ComplexMatrix> = self.branches.iter().flatten().cloned().collect();
        completeness_of(&flat, self.dim, tol)
    }
}

/// `Γ(ρ) = ∑_j ε_j(ρ) ⊗ |j⟩⟨j|` on `A ⊗ J`, `A` most significant.
pub fn instrument_output(instr: &QuantumInstrument, rho: &DensityMatrix) -> Result<ComplexMatrix> {
    let n = instr.branch_count();
    let d = instr.dim;
    let mut out = ComplexMatrix::zeros(d * n, d * n);
    for j in 0..n {
        let flag = ComplexVector::basis(n, j).projector();
        out = out.add(&instr.branch_output(j, rho)?.tensor(&flag))?;
    }
    Ok(out)
}

/// `Tr ε_j(ρ)` for every branch.
pub fn branch_probabilities(instr: &QuantumInstrument, rho: &DensityMatrix) -> Result<Vec<f64>> {
    (0..instr.branch_count()).map(|j| clamp_probability(j, instr.branch_output(j, rho)?.trace().re)).collect()
}

/// Flattens `{M_{j,k}}` in branch-major order, labelled `"j,k"`.
pub fn povm_from_instrument(instr: &QuantumInstrument) -> Povm {
    let mut elements = Vec::new();
    let mut labels = Vec::new();
    for (j, branch) in instr.branches.iter().enumerate() {
        for (k, m) in branch.iter().enumerate() {
            elements.push(m.clone());
            labels.push(format!("{j},{k}"));
        }
    }
    Povm { elements, dim: instr.dim, labels: Some(labels) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn zero_state(d: usize) -> DensityMatrix {
        DensityMatrix::from_pure(&ComplexVector::basis(d, 0)).unwrap()
    }

    fn assert_probs(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < tol, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn completeness_examples() {
        let ex1 = presets::ex1();
        let rep = validate_completeness(&ex1, COMPLETENESS_TOL).unwrap();
        assert!(rep.passed(), "{rep:?}");

        let id = Povm::new(vec![ComplexMatrix::identity(3)]).unwrap();
        assert!(validate_completeness(&id, COMPLETENESS_TOL).unwrap().passed());

        // M1†M1 = (1/8)[[4, 2√3], [2√3, 4]]; largest deviation from I is |4/8 − 1| = 1/2.
        let half = Povm::new(vec![ex1.elements()[0].clone()]).unwrap();
        let rep = validate_completeness(&half, COMPLETENESS_TOL).unwrap();
        assert!(!rep.passed());
        assert!((rep.max_deviation - 0.5).abs() < 1e-12);
        assert!(matches!(rep.into_result(), Err(Error::Incomplete { .. })));
    }

    #[test]
    fn structural_errors_are_distinct() {
        assert!(matches!(Povm::new(vec![]), Err(Error::Empty)));
        let err = Povm::new(vec![ComplexMatrix::identity(2), ComplexMatrix::identity(3)]);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        let err = Povm::new(vec![ComplexMatrix::zeros(2, 3)]);
        assert!(matches!(err, Err(Error::NotSquare { .. })));
    }

    #[test]
    fn worked_example_probabilities() {
        assert_probs(&outcome_probabilities(&presets::ex1(), &zero_state(2)).unwrap(), &[0.5, 0.5], 1e-12);
        assert_probs(
            &outcome_probabilities(&presets::ex2(), &zero_state(2)).unwrap(),
            &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            1e-12,
        );
        let rho3 = DensityMatrix::from_pure(&presets::ex3_input()).unwrap();
        assert_probs(&outcome_probabilities(&presets::ex3(), &rho3).unwrap(), &[1.0 / 6.0, 0.5, 1.0 / 3.0], 1e-12);
        assert_probs(
            &outcome_probabilities(&presets::ex4(), &zero_state(4)).unwrap(),
            &[1.0 / 3.0, 1.0 / 12.0, 1.0 / 12.0, 0.5],
            1e-12,
        );
    }

    #[test]
    fn ex4_is_complete_under_standard_bell_convention() {
        let rep = validate_completeness(&presets::ex4(), COMPLETENESS_TOL).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        assert!(matches!(
            outcome_probabilities(&presets::ex1(), &zero_state(3)),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn post_measurement_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityMatrix::from_pure(&ComplexVector::from_real(&[h, h])).unwrap();
        let z = Povm::computational_basis(2);
        let post = post_measurement_state(&z, 0, &plus).unwrap();
        assert!(post.matrix().max_abs_diff(&ComplexVector::basis(2, 0).projector()) < 1e-15);

        // Rank-one element collapses onto its own ray.
        let post = post_measurement_state(&presets::ex2(), 1, &zero_state(2)).unwrap();
        let ray = presets::bloch_xz(2.0 * std::f64::consts::PI / 3.0);
        assert!(post.matrix().max_abs_diff(&ray.projector()) < 1e-12);

        // M1|0⟩ ∝ |0⟩ + √3|1⟩.
        let post = post_measurement_state(&presets::ex1(), 0, &zero_state(2)).unwrap();
        let v = ComplexVector::from_real(&[0.5, 3f64.sqrt() / 2.0]);
        assert!(post.matrix().max_abs_diff(&v.projector()) < 1e-12);
    }

    #[test]
    fn zero_probability_outcome_is_rejected() {
        let z = Povm::computational_basis(2);
        let err = post_measurement_state(&z, 1, &zero_state(2)).unwrap_err();
        assert!(matches!(err, Error::UnconditionableOutcome { outcome: 1, .. }));
    }

    #[test]
    fn negative_probability_is_an_error() {
        // A non-physical "POVM" whose element has a huge negative expectation
        // cannot occur with M†M, so exercise the clamp directly.
        assert_eq!(clamp_probability(0, -5e-13).unwrap(), 0.0);
        assert!(matches!(clamp_probability(3, -1e-6), Err(Error::NegativeProbability { outcome: 3, .. })));
    }

    #[test]
    fn instrument_examples() {
        let single = QuantumInstrument::new(vec![vec![ComplexMatrix::identity(2)]]).unwrap();
        let rho = DensityMatrix::from_pure(&ComplexVector::from_real(&[0.6, 0.8])).unwrap();
        let out = instrument_output(&single, &rho).unwrap();
        assert!(out.max_abs_diff(rho.matrix()) < 1e-15);

        let qi = presets::instrument();
        assert!(qi.validate(COMPLETENESS_TOL).unwrap().passed());
        let gamma = instrument_output(&qi, &zero_state(2)).unwrap();
        assert!(gamma.max_abs_diff(&presets::instrument_gamma()) < 1e-12);
        assert_probs(&branch_probabilities(&qi, &zero_state(2)).unwrap(), &[0.75, 0.25], 1e-12);
    }

    #[test]
    fn flattening_instrument() {
        let qi = presets::instrument();
        let p = povm_from_instrument(&qi);
        assert_eq!(p.len(), 4);
        assert!(validate_completeness(&p, COMPLETENESS_TOL).unwrap().passed());
        assert_eq!(p.labels().unwrap(), ["0,0", "0,1", "1,0", "1,1"]);

        let id = QuantumInstrument::new(vec![vec![ComplexMatrix::identity(2)]]).unwrap();
        assert_eq!(povm_from_instrument(&id).elements(), [ComplexMatrix::identity(2)]);

        let a = ComplexMatrix::diagonal(&[c(1.0), c(0.0)]);
        let b = ComplexMatrix::diagonal(&[c(0.0), c(1.0)]);
        let two = QuantumInstrument::new(vec![vec![a.clone()], vec![b.clone()]]).unwrap();
        assert_eq!(povm_from_instrument(&two).elements(), [a, b]);
    }

    #[test]
    fn random_povm_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let d = 2 + trial % 3;
            let n = 2 + (trial / 3) % 3;
            let p = random::povm(&mut rng, d, n);
            let psi = random::haar_state(&mut rng, d);
            let rho = DensityMatrix::from_pure(&psi).unwrap();
            let probs = outcome_probabilities(&p, &rho).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);

            let mut mixture = ComplexMatrix::zeros(d, d);
            for (j, &pj) in probs.iter().enumerate() {
                if pj > CONDITION_THRESHOLD {
                    let post = post_measurement_state(&p, j, &rho).unwrap();
                    mixture = mixture.add(&post.matrix().scale(c(pj))).unwrap();
                }
            }
            assert!(mixture.max_abs_diff(&measurement_channel(&p, &rho).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn projective_post_measurement_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = Povm::computational_basis(3);
        for _ in 0..20 {
            let rho = DensityMatrix::from_pure(&random::haar_state(&mut rng, 3)).unwrap();
            for j in 0..3 {
                let once = post_measurement_state(&z, j, &rho).unwrap();
                let twice = post_measurement_state(&z, j, &once).unwrap();
                assert!(once.matrix().max_abs_diff(twice.matrix()) < 1e-12);
            }
        }
    }

    #[test]
    fn instrument_output_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let qi = random::instrument(&mut rng, 3, &[2, 1, 3]);
            let rho = DensityMatrix::from_pure(&random::haar_state(&mut rng, 3)).unwrap();
            let gamma = instrument_output(&qi, &rho).unwrap();
            assert!((gamma.trace().re - 1.0).abs() < 1e-10);
            let reduced = crate::linalg::partial_trace(&gamma, &[3, 3], &[0]).unwrap();
            let channel = measurement_channel(&povm_from_instrument(&qi), &rho).unwrap();
            assert!(reduced.max_abs_diff(&channel) < 1e-10);
        }
    }
}
