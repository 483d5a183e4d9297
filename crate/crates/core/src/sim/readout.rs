//! Classical readout noise: a symmetric bit-flip channel per measured qubit,
//! and its inversion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng, ShotRecord};
use crate::error::{Error, Result};

const SINGULAR_TOL: f64 = 1e-12;

/// Device calibration data. Only `readout_error` feeds the noise model; the
/// remaining fields are carried for reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub device: String,
    #[serde(default)]
    pub description: String,
    pub qubits: Vec<QubitCalibration>,
    #[serde(default)]
    pub cnot_errors: Vec<CnotCalibration>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitCalibration {
    pub qubit: usize,
    pub frequency_ghz: f64,
    pub t1_us: f64,
    pub t2_us: f64,
    pub single_qubit_error: f64,
    pub readout_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnotCalibration {
    pub control: usize,
    pub target: usize,
    pub error: f64,
}

/// Per-qubit flip probabilities; entry `i` applies to the `i`-th measured qubit.
/// Qubit `i` has confusion matrix `[[1−p, p], [p, 1−p]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionModel {
    rates: Vec<f64>,
}

impl ConfusionModel {
    pub fn symmetric(rates: Vec<f64>) -> Result<Self> {
        for (qubit, &rate) in rates.iter().enumerate() {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::BadErrorRate { qubit, rate });
            }
        }
        Ok(Self { rates })
    }

    pub fn ideal(qubits: usize) -> Self {
        Self { rates: vec![0.0; qubits] }
    }

    /// Maps measured qubit `i` to calibrated qubit `layout[i]`.
    pub fn from_calibration(cal: &Calibration, layout: &[usize]) -> Result<Self> {
        let rates = layout
            .iter()
            .map(|&q| {
                cal.qubits
                    .iter()
                    .find(|c| c.qubit == q)
                    .map(|c| c.readout_error)
                    .ok_or(Error::ModelTooSmall { available: cal.qubits.len(), required: q + 1 })
            })
            .collect::<Result<_>>()?;
        Self::symmetric(rates)
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Column-stochastic `P(read r | true t)` as `[[r0|t0, r0|t1], [r1|t0, r1|t1]]`.
    pub fn matrix(&self, qubit: usize) -> [[f64; 2]; 2] {
        let p = self.rates[qubit];
        [[1.0 - p, p], [p, 1.0 - p]]
    }

    fn covers(&self, measured: usize) -> Result<()> {
        if self.rates.len() < measured {
            return Err(Error::ModelTooSmall { available: self.rates.len(), required: measured });
        }
        Ok(())
    }
}

/// Flips each bit of each shot independently with its qubit's rate.
pub fn apply_confusion(record: &ShotRecord, model: &ConfusionModel, seed: u64) -> Result<ShotRecord> {
    let m = record.measured_qubits.len();
    model.covers(m)?;
    let mut gen = rng::generator(seed);
    let mut out = vec![0u64; 1 << m];
    for (outcome, count) in record.count_vector().into_iter().enumerate() {
        for _ in 0..count {
            let mut value = outcome;
            for (i, &p) in model.rates[..m].iter().enumerate() {
                if p > 0.0 && gen.random::<f64>() < p {
                    value ^= 1 << (m - 1 - i);
                }
            }
            out[value] += 1;
        }
    }
    Ok(ShotRecord::from_dense(&out, seed, record.measured_qubits.clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mitigated {
    /// Point of the probability simplex nearest to the inverted frequencies.
    pub probabilities: Vec<f64>,
    /// Inverted frequencies before projection.
    pub quasi_probabilities: Vec<f64>,
    /// Total weight of the negative quasi-probabilities.
    pub negativity: f64,
}

/// Applies the inverse of the tensor-product confusion matrix to the
/// empirical frequencies and projects the result onto the simplex.
pub fn mitigate_readout(record: &ShotRecord, model: &ConfusionModel) -> Result<Mitigated> {
    let m = record.measured_qubits.len();
    model.covers(m)?;
    let mut v = record.frequencies();
    for (i, &p) in model.rates[..m].iter().enumerate() {
        let det = 1.0 - 2.0 * p;
        if det.abs() < SINGULAR_TOL {
            return Err(Error::SingularConfusion { qubit: i, rate: p });
        }
        let (a, b) = ((1.0 - p) / det, -p / det);
        let stride = 1 << (m - 1 - i);
        for block in v.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, y0) = (*x, *y);
                *x = a * x0 + b * y0;
                *y = b * x0 + a * y0;
            }
        }
    }
    let negativity = -v.iter().filter(|&&x| x < 0.0).sum::<f64>();
    Ok(Mitigated { probabilities: project_to_simplex(&v), quasi_probabilities: v, negativity })
}

/// Euclidean projection onto `{x ≥ 0, ∑x = 1}` (sort-and-threshold).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(counts: &[u64], seed: u64) -> ShotRecord {
        let m = counts.len().trailing_zeros() as usize;
        ShotRecord::from_dense(counts, seed, (0..m).collect())
    }

    #[test]
    fn zero_error_is_identity() {
        let r = record(&[10, 20, 30, 40], 1);
        let model = ConfusionModel::ideal(2);
        assert_eq!(apply_confusion(&r, &model, 3).unwrap().counts, r.counts);
        let mit = mitigate_readout(&r, &model).unwrap();
        for (m, f) in mit.probabilities.iter().zip(r.frequencies()) {
            assert!((m - f).abs() < 1e-15);
        }
        assert_eq!(mit.negativity, 0.0);
    }

    #[test]
    fn half_rate_scrambles_bit() {
        let shots = 100_000u64;
        let r = record(&[shots, 0], 1);
        let model = ConfusionModel::symmetric(vec![0.5]).unwrap();
        let noisy = apply_confusion(&r, &model, 11).unwrap();
        let f = noisy.frequencies()[1];
        let sigma = (0.25 / shots as f64).sqrt();
        assert!((f - 0.5).abs() <= 5.0 * sigma);
        assert!(matches!(mitigate_readout(&noisy, &model), Err(Error::SingularConfusion { qubit: 0, .. })));
    }

    #[test]
    fn calibrated_flip_rate() {
        let cal: Calibration =
            serde_json::from_str(include_str!("../../data/calibration/ibmq_belem_povm.json")).unwrap();
        let model = ConfusionModel::from_calibration(&cal, &[0]).unwrap();
        assert_eq!(model.rates(), [1.45e-2]);
        let shots = 100_000u64;
        let noisy = apply_confusion(&record(&[shots, 0], 0), &model, 2024).unwrap();
        let p = 1.45e-2;
        let sigma = (p * (1.0 - p) / shots as f64).sqrt();
        assert!((noisy.frequencies()[1] - p).abs() <= 5.0 * sigma);
    }

    #[test]
    fn model_must_cover_measured_qubits() {
        let r = record(&[1, 1, 1, 1], 0);
        let model = ConfusionModel::ideal(1);
        assert!(matches!(apply_confusion(&r, &model, 0), Err(Error::ModelTooSmall { .. })));
        assert!(ConfusionModel::symmetric(vec![1.5]).is_err());
    }

    #[test]
    fn inversion_undoes_exact_confusion() {
        // Push an exact distribution through the tensor confusion matrix by hand
        // and check the inverse recovers it.
        let ideal = [0.5, 0.2, 0.3, 0.0];
        let rates = [0.05, 0.1];
        let mut noisy = [0.0; 4];
        for (t, &pt) in ideal.iter().enumerate() {
            for (r, slot) in noisy.iter_mut().enumerate() {
                let mut pr = pt;
                for (i, &p) in rates.iter().enumerate() {
                    let bit = 1 << (1 - i);
                    pr *= if (t ^ r) & bit != 0 { p } else { 1.0 - p };
                }
                *slot += pr;
            }
        }
        let scale = 1e9_f64;
        let counts: Vec<u64> = noisy.iter().map(|x| (x * scale).round() as u64).collect();
        let mit = mitigate_readout(&record(&counts, 0), &ConfusionModel::symmetric(rates.to_vec()).unwrap()).unwrap();
        for (g, w) in mit.probabilities.iter().zip(ideal) {
            assert!((g - w).abs() < 1e-8);
        }
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_to_simplex(&[0.2, 0.8]), [0.2, 0.8]);
        let p = project_to_simplex(&[1.1, -0.1]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        let p = project_to_simplex(&[0.6, 0.6, -0.2]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15 && p[2] == 0.0);
        let s: f64 = project_to_simplex(&[3.0, -1.0, 0.5, 0.2]).iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
