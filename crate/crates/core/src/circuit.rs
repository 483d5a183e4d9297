use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "lowercase")]
pub enum Gate {
    Ry { qubit: usize, theta: f64 },
    Rz { qubit: usize, theta: f64 },
    Phase { qubit: usize, theta: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn qubits(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. } | Gate::Phase { qubit, .. } => (qubit, None),
            Gate::Cnot { control, target } => (control, Some(target)),
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Ry { theta, .. } | Gate::Rz { theta, .. } | Gate::Phase { theta, .. } => Some(theta),
            Gate::Cnot { .. } => None,
        }
    }

    pub fn is_cnot(&self) -> bool {
        matches!(self, Gate::Cnot { .. })
    }

    /// 2×2 matrix of a single-qubit gate, row-major.
    pub fn matrix_1q(&self) -> Option<[[Complex64; 2]; 2]> {
        let z = Complex64::new(0.0, 0.0);
        match *self {
            Gate::Ry { theta, .. } => {
                let (s, c) = (theta / 2.0).sin_cos();
                Some([
                    [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                    [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
                ])
            }
            Gate::Rz { theta, .. } => {
                Some([[Complex64::from_polar(1.0, -theta / 2.0), z], [z, Complex64::from_polar(1.0, theta / 2.0)]])
            }
            Gate::Phase { theta, .. } => Some([[Complex64::new(1.0, 0.0), z], [z, Complex64::from_polar(1.0, theta)]]),
            Gate::Cnot { .. } => None,
        }
    }

    fn validate(&self, width: usize) -> Result<()> {
        let (a, b) = self.qubits();
        for q in std::iter::once(a).chain(b) {
            if q >= width {
                return Err(Error::QubitOutOfRange { qubit: q, width });
            }
        }
        if let Gate::Cnot { control, target } = *self {
            if control == target {
                return Err(Error::InvalidArgument(format!("cnot with control == target == {control}")));
            }
        }
        if let Some(theta) = self.angle() {
            if !theta.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite angle {theta}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::Ry { qubit, theta } => write!(f, "ry({theta}) q[{qubit}]"),
            Gate::Rz { qubit, theta } => write!(f, "rz({theta}) q[{qubit}]"),
            Gate::Phase { qubit, theta } => write!(f, "p({theta}) q[{qubit}]"),
            Gate::Cnot { control, target } => write!(f, "cx q[{control}], q[{target}]"),
        }
    }
}

/// An ordered gate list on `width` qubits. The global phase is carried as a
/// number, never as a gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    width: usize,
    gates: Vec<Gate>,
    global_phase: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub ry: usize,
    pub rz: usize,
    pub phase: usize,
    pub cnot: usize,
}

impl GateCounts {
    pub fn single_qubit(&self) -> usize {
        self.ry + self.rz + self.phase
    }

    pub fn total(&self) -> usize {
        self.single_qubit() + self.cnot
    }
}

impl Circuit {
    pub fn new(width: usize) -> Self {
        Self { width, gates: Vec::new(), global_phase: 0.0 }
    }

    pub fn from_gates(width: usize, gates: Vec<Gate>, global_phase: f64) -> Result<Self> {
        let mut c = Self::new(width);
        c.global_phase = global_phase;
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.width)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn global_phase(&self) -> f64 {
        self.global_phase
    }

    pub fn set_global_phase(&mut self, phase: f64) {
        self.global_phase = phase;
    }

    pub fn counts(&self) -> GateCounts {
        let mut c = GateCounts::default();
        for g in &self.gates {
            match g {
                Gate::Ry { .. } => c.ry += 1,
                Gate::Rz { .. } => c.rz += 1,
                Gate::Phase { .. } => c.phase += 1,
                Gate::Cnot { .. } => c.cnot += 1,
            }
        }
        c
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_cnot()).count()
    }
}
