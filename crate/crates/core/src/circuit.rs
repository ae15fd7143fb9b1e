//! The QASA parameterized circuit and its bridge onto the autodiff tape.
//!
//! Register: `n` data wires plus one auxiliary wire (index `n`). Each of the
//! `L_q` layers applies, in order:
//!
//! 1. `RX(x_i)`, `RZ(x_i)` on every data wire (inputs re-uploaded per layer)
//! 2. `RY(θ[l, 2i])`, `RZ(θ[l, 2i+1])` on every data wire
//! 3. ring `CNOT(i → (i+1) mod n)`; the self-targeting CNOT of `n = 1` is skipped
//! 4. `CNOT(n-1 → n)` onto the auxiliary wire
//! 5. `RY(θ[l, 2n])` on the auxiliary wire
//!
//! Outputs are `⟨Z_j⟩` for the data wires only.

use crate::autodiff::{Jacobian, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::qsim::{self, Angle, Circuit, GateOp};
use crate::rng::{streams, SeedStream};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientEngine {
    #[default]
    Adjoint,
    ParameterShift,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QasaCircuitSpec {
    /// Data qubits; the register has `qubits + 1` wires.
    pub qubits: usize,
    pub layers: usize,
}

impl QasaCircuitSpec {
    pub fn new(qubits: usize, layers: usize) -> Result<Self> {
        if qubits == 0 {
            return Err(Error::contract("QASA circuit needs at least one data qubit"));
        }
        if layers == 0 {
            return Err(Error::contract("QASA circuit needs at least one layer"));
        }
        Ok(Self { qubits, layers })
    }

    pub fn params_per_layer(&self) -> usize {
        2 * self.qubits + 1
    }

    pub fn num_params(&self) -> usize {
        self.layers * self.params_per_layer()
    }

    pub fn num_wires(&self) -> usize {
        self.qubits + 1
    }

    pub fn gates_per_layer(&self) -> usize {
        let ring = if self.qubits == 1 { 0 } else { self.qubits };
        4 * self.qubits + ring + 2
    }

    pub fn build_gates(&self) -> Result<Vec<GateOp>> {
        let n = self.qubits;
        if n == 0 || self.layers == 0 {
            return Err(Error::contract("QASA circuit needs n >= 1 and L_q >= 1"));
        }
        let ppl = self.params_per_layer();
        let mut gates = Vec::with_capacity(self.layers * self.gates_per_layer());
        for l in 0..self.layers {
            for i in 0..n {
                gates.push(GateOp::rx(i, Angle::Input(i)));
                gates.push(GateOp::rz(i, Angle::Input(i)));
            }
            for i in 0..n {
                gates.push(GateOp::ry(i, Angle::Param(l * ppl + 2 * i)));
                gates.push(GateOp::rz(i, Angle::Param(l * ppl + 2 * i + 1)));
            }
            for i in 0..n {
                let t = (i + 1) % n;
                if t != i {
                    gates.push(GateOp::cnot(i, t));
                }
            }
            gates.push(GateOp::cnot(n - 1, n));
            gates.push(GateOp::ry(n, Angle::Param(l * ppl + 2 * n)));
        }
        Ok(gates)
    }

    pub fn circuit(&self) -> Result<Circuit> {
        Circuit::new(self.num_wires(), self.build_gates()?)
    }

    pub fn observed_wires(&self) -> Vec<usize> {
        (0..self.qubits).collect()
    }

    /// θ ~ N(0, 0.1²), flattened `[layers, 2n+1]`.
    pub fn init_theta(&self, seed: u64) -> Vec<f64> {
        let mut rng = SeedStream::new(seed, streams::CIRCUIT);
        (0..self.num_params()).map(|_| rng.normal_with(0.0, 0.1)).collect()
    }
}

/// Expectations together with their Jacobians.
#[derive(Clone, Debug)]
pub struct QasaJacobians {
    pub outputs: Vec<f64>,
    /// `[n × n]`, row = output wire, column = input slot.
    pub d_inputs: Vec<f64>,
    /// `[n × num_params]`.
    pub d_theta: Vec<f64>,
}

/// A built QASA circuit with an evaluation counter.
#[derive(Clone, Debug)]
pub struct QasaCircuit {
    spec: QasaCircuitSpec,
    circuit: Circuit,
    observed: Vec<usize>,
    engine: GradientEngine,
    evaluations: Arc<AtomicU64>,
}

impl QasaCircuit {
    pub fn new(spec: QasaCircuitSpec, engine: GradientEngine) -> Result<Self> {
        Ok(Self {
            circuit: spec.circuit()?,
            observed: spec.observed_wires(),
            spec,
            engine,
            evaluations: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn spec(&self) -> &QasaCircuitSpec {
        &self.spec
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    /// Number of circuit evaluations (forward or gradient) so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    fn check(&self, theta: &[f64], h_q: &[f64]) -> Result<()> {
        if h_q.len() != self.spec.qubits {
            return Err(Error::dim("qasa_circuit input", &[self.spec.qubits], &[h_q.len()]));
        }
        if theta.len() != self.spec.num_params() {
            return Err(Error::dim(
                "qasa_circuit theta",
                &[self.spec.layers, self.spec.params_per_layer()],
                &[theta.len()],
            ));
        }
        Ok(())
    }

    /// `[⟨Z_0⟩, …, ⟨Z_{n-1}⟩]` for input angles `h_q`.
    pub fn forward(&self, theta: &[f64], h_q: &[f64]) -> Result<Vec<f64>> {
        self.check(theta, h_q)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let state = qsim::run_circuit(&self.circuit, theta, h_q)?;
        self.observed.iter().map(|&w| state.expectation_z(w)).collect()
    }

    pub fn jacobians(&self, theta: &[f64], h_q: &[f64]) -> Result<QasaJacobians> {
        self.check(theta, h_q)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let g = match self.engine {
            GradientEngine::Adjoint => {
                qsim::adjoint_gradient(&self.circuit, theta, h_q, &self.observed)?
            }
            GradientEngine::ParameterShift => {
                qsim::parameter_shift_gradient(&self.circuit, theta, h_q, &self.observed)?
            }
        };
        Ok(QasaJacobians {
            outputs: g.expectations,
            d_inputs: g.d_inputs,
            d_theta: g.d_params,
        })
    }

    /// Applies the circuit to every row of `h_q` (`[rows × n]`) on the tape.
    /// `theta` must hold `num_params` values (any shape).
    pub fn apply_on_tape(&self, tape: &mut Tape, h_q: Var, theta: Var) -> Result<Var> {
        let n = self.spec.qubits;
        let (rows, cols) = match tape.shape(h_q) {
            [r, c] => (*r, *c),
            other => return Err(Error::dim("quantum node", other, &[0, n])),
        };
        if cols != n {
            return Err(Error::dim("quantum node", &[rows, cols], &[rows, n]));
        }
        let need_grad = tape.requires_grad(h_q) || tape.requires_grad(theta);
        let p = self.spec.num_params();
        tape.custom(&[h_q, theta], |vals| {
            let (x, th) = (vals[0].data(), vals[1].data());
            let mut out = Vec::with_capacity(rows * n);
            if !need_grad {
                for r in 0..rows {
                    out.extend(self.forward(th, &x[r * n..(r + 1) * n])?);
                }
                let value = Tensor::matrix(rows, n, out)?;
                return Ok((value, vec![Jacobian::Zero, Jacobian::Zero]));
            }
            let mut blocks = Vec::with_capacity(rows * n * n);
            let mut dtheta = Vec::with_capacity(rows * n * p);
            for r in 0..rows {
                let j = self.jacobians(th, &x[r * n..(r + 1) * n])?;
                out.extend_from_slice(&j.outputs);
                blocks.extend_from_slice(&j.d_inputs);
                dtheta.extend_from_slice(&j.d_theta);
            }
            let value = Tensor::matrix(rows, n, out)?;
            Ok((
                value,
                vec![
                    Jacobian::RowBlocks {
                        rows,
                        out_cols: n,
                        in_cols: n,
                        blocks,
                    },
                    Jacobian::Dense(dtheta),
                ],
            ))
        })
    }
}
