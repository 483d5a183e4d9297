use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng, StateVector};
use crate::error::{Error, Result};
use crate::linalg::ComplexVector;
use crate::povm::CONDITION_THRESHOLD;

/// Bitstring of `value` over `width` bits, most significant first.
pub fn bitstring(value: usize, width: usize) -> String {
    (0..width).map(|b| if (value >> (width - 1 - b)) & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn parse_bitstring(s: &str, width: usize) -> Result<usize> {
    if s.len() != width || !s.bytes().all(|b| b == b'0' || b == b'1') {
        return Err(Error::BadBitstring(s.to_string()));
    }
    Ok(s.bytes().fold(0, |acc, b| (acc << 1) | usize::from(b == b'1')))
}

fn check_qubits(width: usize, qubits: &[usize]) -> Result<()> {
    for (i, &q) in qubits.iter().enumerate() {
        if q >= width {
            return Err(Error::QubitOutOfRange { qubit: q, width });
        }
        if qubits[..i].contains(&q) {
            return Err(Error::InvalidArgument(format!("qubit {q} listed twice")));
        }
    }
    Ok(())
}

/// Value of the measured qubits within basis index `i`, `qubits[0]` most significant.
fn extract(i: usize, width: usize, qubits: &[usize]) -> usize {
    qubits.iter().fold(0, |acc, &q| (acc << 1) | ((i >> (width - 1 - q)) & 1))
}

/// Born-rule distribution of `qubits`, indexed with `qubits[0]` most significant.
pub fn marginal_probabilities(s: &StateVector, qubits: &[usize]) -> Result<Vec<f64>> {
    check_qubits(s.width(), qubits)?;
    let mut probs = vec![0.0; 1 << qubits.len()];
    for (i, a) in s.amplitudes().entries().iter().enumerate() {
        probs[extract(i, s.width(), qubits)] += a.norm_sqr();
    }
    Ok(probs)
}

/// Counts of sampled outcomes; keys are bitstrings over the measured qubits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub counts: BTreeMap<String, u64>,
    pub shots: u64,
    pub seed: u64,
    pub measured_qubits: Vec<usize>,
}

impl ShotRecord {
    pub fn outcome_count(&self) -> usize {
        1 << self.measured_qubits.len()
    }

    pub fn count(&self, outcome: usize) -> u64 {
        let key = bitstring(outcome, self.measured_qubits.len());
        self.counts.get(&key).copied().unwrap_or(0)
    }

    /// Dense count vector indexed by outcome value.
    pub fn count_vector(&self) -> Vec<u64> {
        (0..self.outcome_count()).map(|o| self.count(o)).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.shots.max(1) as f64;
        self.count_vector().into_iter().map(|c| c as f64 / total).collect()
    }

    pub(crate) fn from_dense(counts: &[u64], seed: u64, measured_qubits: Vec<usize>) -> Self {
        let width = measured_qubits.len();
        let map = counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(o, &c)| (bitstring(o, width), c)).collect();
        Self { counts: map, shots: counts.iter().sum(), seed, measured_qubits }
    }
}

/// Draws `shots` i.i.d. outcomes of `qubits` by inverse-CDF sampling on a
/// ChaCha8 stream seeded with `seed`.
pub fn sample_shots(s: &StateVector, qubits: &[usize], shots: u64, seed: u64) -> Result<ShotRecord> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    let probs = marginal_probabilities(s, qubits)?;
    Ok(ShotRecord::from_dense(&sample_distribution(&probs, shots, seed), seed, qubits.to_vec()))
}

pub(crate) fn sample_distribution(probs: &[f64], shots: u64, seed: u64) -> Vec<u64> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cdf.push(acc);
    }
    // Rounding can leave the total a hair under 1; draws past it go to the last
    // outcome that carries weight.
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut counts = vec![0u64; probs.len()];
    let mut gen = rng::generator(seed);
    for _ in 0..shots {
        let u: f64 = gen.random();
        let idx = cdf.partition_point(|&c| c <= u).min(last);
        counts[idx] += 1;
    }
    counts
}

/// Conditions on `qubits` reading `outcome`; returns the renormalized state
/// of the remaining qubits (original order) and the outcome probability.
pub fn post_select(s: &StateVector, qubits: &[usize], outcome: &str) -> Result<(StateVector, f64)> {
    check_qubits(s.width(), qubits)?;
    let want = parse_bitstring(outcome, qubits.len())?;
    let width = s.width();
    let rest: Vec<usize> = (0..width).filter(|q| !qubits.contains(q)).collect();
    let mut out = ComplexVector::zeros(1 << rest.len());
    for (i, a) in s.amplitudes().entries().iter().enumerate() {
        if extract(i, width, qubits) == want {
            out[extract(i, width, &rest)] = *a;
        }
    }
    let probability = out.norm_sqr();
    if probability <= CONDITION_THRESHOLD {
        return Err(Error::UnconditionableOutcome { outcome: want, probability });
    }
    let normalized = out.normalized().expect("nonzero");
    Ok((StateVector::from_amplitudes(normalized)?, probability))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::{encode_to_qubits, joint_state};
    use crate::presets;
    use crate::sim::run_circuit;
    use crate::stateprep::prepare_state;
    use num_complex::Complex64;

    fn prepared(p: &crate::povm::Povm, psi: &ComplexVector) -> StateVector {
        let (v, _) = encode_to_qubits(&joint_state(p, psi).unwrap());
        run_circuit(&prepare_state(&v).unwrap(), None).unwrap()
    }

    fn assert_close(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < tol, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn bitstrings() {
        assert_eq!(bitstring(2, 3), "010");
        assert_eq!(parse_bitstring("110", 3).unwrap(), 6);
        assert!(parse_bitstring("12", 2).is_err());
        assert!(parse_bitstring("1", 2).is_err());
    }

    #[test]
    fn marginal_examples() {
        let s = prepared(&presets::ex2(), &ComplexVector::basis(2, 0));
        assert_close(&marginal_probabilities(&s, &[1, 2]).unwrap(), &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 0.0], 1e-12);

        let s = prepared(&presets::ex4(), &ComplexVector::basis(4, 0));
        assert_close(&marginal_probabilities(&s, &[2, 3]).unwrap(), &[1.0 / 3.0, 1.0 / 12.0, 1.0 / 12.0, 0.5], 1e-12);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = StateVector::from_amplitudes(ComplexVector::from_real(&[h, h, 0.0, 0.0])).unwrap();
        assert_close(&marginal_probabilities(&s, &[1]).unwrap(), &[0.5, 0.5], 1e-15);
        assert_close(&marginal_probabilities(&s, &[0]).unwrap(), &[1.0, 0.0], 1e-15);
    }

    #[test]
    fn marginal_qubit_order() {
        // |01⟩: reading qubits (1, 0) gives "10".
        let s = StateVector::from_amplitudes(ComplexVector::basis(4, 1)).unwrap();
        assert_eq!(marginal_probabilities(&s, &[1, 0]).unwrap(), [0.0, 0.0, 1.0, 0.0]);
        assert!(marginal_probabilities(&s, &[2]).is_err());
        assert!(marginal_probabilities(&s, &[0, 0]).is_err());
    }

    #[test]
    fn deterministic_sampling() {
        let s = StateVector::zero(2);
        let rec = sample_shots(&s, &[0, 1], 1000, 3).unwrap();
        assert_eq!(rec.counts.len(), 1);
        assert_eq!(rec.counts["00"], 1000);
        assert_eq!(rec.shots, 1000);
        assert!(sample_shots(&s, &[0], 0, 3).is_err());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let s = prepared(&presets::ex1(), &ComplexVector::basis(2, 0));
        let a = sample_shots(&s, &[1], 8192, 42).unwrap();
        let b = sample_shots(&s, &[1], 8192, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_shots(&s, &[1], 8192, 43).unwrap();
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn ex1_sampling_within_binomial_band() {
        let s = prepared(&presets::ex1(), &ComplexVector::basis(2, 0));
        let shots = 8192u64;
        let rec = sample_shots(&s, &[1], shots, 7).unwrap();
        let sigma = (0.25f64 / shots as f64).sqrt();
        for f in rec.frequencies() {
            assert!((f - 0.5).abs() <= 5.0 * sigma);
        }
    }

    #[test]
    fn zero_probability_outcomes_never_drawn() {
        let probs = [0.0, 0.5, 0.0, 0.5, 0.0];
        let counts = sample_distribution(&probs, 10_000, 1);
        assert_eq!(counts[0] + counts[2] + counts[4], 0);
    }

    #[test]
    fn post_select_examples() {
        let s = prepared(&presets::ex1(), &ComplexVector::basis(2, 0));
        let (a, p) = post_select(&s, &[1], "0").unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        let want = ComplexVector::from_real(&[0.5, 3f64.sqrt() / 2.0]);
        assert!(a.amplitudes().phase_aligned_distance(&want) < 1e-12);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = StateVector::from_amplitudes(ComplexVector::from_real(&[h, 0.0, 0.0, h])).unwrap();
        let (rest, p) = post_select(&bell, &[0], "1").unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(rest.amplitudes().max_abs_diff(&ComplexVector::basis(2, 1)) < 1e-15);

        assert!(matches!(post_select(&StateVector::zero(2), &[0], "1"), Err(Error::UnconditionableOutcome { .. })));
    }

    #[test]
    fn ex3_post_select_third_outcome() {
        let s = prepared(&presets::ex3(), &presets::ex3_input());
        let (a, p) = post_select(&s, &[2, 3], "10").unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        // −γ|1⟩ normalized: the qutrit level 1 is register value 01.
        let gamma = Complex64::new(3f64.sqrt(), -3.0) / 6.0;
        let want = ComplexVector::basis(4, 1).scale(-gamma / gamma.norm());
        assert!(a.amplitudes().phase_aligned_distance(&want) < 1e-12);
    }
}
