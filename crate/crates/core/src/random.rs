//! Random states, unitaries-by-columns and measurement models, for property
//! tests and benchmarking.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{ComplexMatrix, ComplexVector};
use crate::povm::{Povm, QuantumInstrument};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random pure state of dimension `dim`.
pub fn haar_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> ComplexVector {
    loop {
        let v = ComplexVector::new((0..dim).map(|_| gaussian(rng)).collect());
        if let Some(n) = v.normalized() {
            return n;
        }
    }
}

/// Haar-random isometry with `cols` orthonormal columns in dimension `rows`,
/// by Gram–Schmidt on complex Gaussian columns.
pub fn isometry<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    assert!(cols <= rows);
    let mut basis: Vec<ComplexVector> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v = ComplexVector::new((0..rows).map(|_| gaussian(rng)).collect());
        // Two passes keep the columns orthogonal to rounding.
        for _ in 0..2 {
            for b in &basis {
                let overlap = b.inner(&v);
                for (x, y) in v.entries_mut().iter_mut().zip(b.entries()) {
                    *x -= overlap * y;
                }
            }
        }
        if let Some(n) = v.normalized() {
            basis.push(n);
        }
    }
    let mut m = ComplexMatrix::zeros(rows, cols);
    for (c, col) in basis.iter().enumerate() {
        for r in 0..rows {
            m[(r, c)] = col[r];
        }
    }
    m
}

/// POVM with `outcomes` elements on dimension `dim`, obtained by cutting a
/// random `(dim·outcomes) × dim` isometry into `dim × dim` blocks.
pub fn povm<R: Rng + ?Sized>(rng: &mut R, dim: usize, outcomes: usize) -> Povm {
    Povm::new(blocks(&isometry(rng, dim * outcomes, dim), dim)).expect("blocks are square")
}

/// Instrument whose branch `j` carries `kraus_counts[j]` Kraus operators.
pub fn instrument<R: Rng + ?Sized>(rng: &mut R, dim: usize, kraus_counts: &[usize]) -> QuantumInstrument {
    let total: usize = kraus_counts.iter().sum();
    let mut all = blocks(&isometry(rng, dim * total, dim), dim).into_iter();
    let branches = kraus_counts.iter().map(|&k| all.by_ref().take(k).collect()).collect();
    QuantumInstrument::new(branches).expect("blocks are square")
}

fn blocks(v: &ComplexMatrix, dim: usize) -> Vec<ComplexMatrix> {
    (0..v.rows() / dim)
        .map(|j| {
            let mut m = ComplexMatrix::zeros(dim, dim);
            for r in 0..dim {
                for c in 0..dim {
                    m[(r, c)] = v[(j * dim + r, c)];
                }
            }
            m
        })
        .collect()
}
