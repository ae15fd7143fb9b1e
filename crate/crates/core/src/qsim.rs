//! Dense statevector simulation of RX/RY/RZ/CNOT circuits.
//!
//! Conventions: wire 0 is the least-significant bit of the amplitude index,
//! and rotations are `R_P(θ) = exp(-i·θ·P/2)`.
//!
//! Two gradient engines are provided. [`adjoint_gradient`] sweeps the state
//! and one adjoint state per observable backwards through the gate list;
//! [`parameter_shift_gradient`] re-runs the circuit with each rotation
//! occurrence shifted by ±π/2. They share nothing beyond the gate kernels.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cnot,
}

/// Where a gate's rotation angle comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Fixed(f64),
    /// Index into the trainable parameter vector.
    Param(usize),
    /// Index into the classical input vector.
    Input(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: Option<Angle>,
}

impl GateOp {
    pub fn rx(target: usize, angle: Angle) -> Self {
        Self::rotation(GateKind::Rx, target, angle)
    }

    pub fn ry(target: usize, angle: Angle) -> Self {
        Self::rotation(GateKind::Ry, target, angle)
    }

    pub fn rz(target: usize, angle: Angle) -> Self {
        Self::rotation(GateKind::Rz, target, angle)
    }

    pub fn rotation(kind: GateKind, target: usize, angle: Angle) -> Self {
        Self {
            kind,
            target,
            control: None,
            angle: Some(angle),
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            angle: None,
        }
    }

    pub fn is_rotation(&self) -> bool {
        !matches!(self.kind, GateKind::Cnot)
    }

    fn check_wires(&self, num_qubits: usize) -> Result<()> {
        if self.target >= num_qubits {
            return Err(Error::Index {
                what: "wire",
                index: self.target,
                limit: num_qubits,
            });
        }
        if self.kind == GateKind::Cnot {
            let c = self
                .control
                .ok_or_else(|| Error::contract("CNOT without control wire"))?;
            if c >= num_qubits {
                return Err(Error::Index {
                    what: "wire",
                    index: c,
                    limit: num_qubits,
                });
            }
            if c == self.target {
                return Err(Error::contract(format!("CNOT control equals target ({c})")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `num_qubits` wires.
    pub fn zero(num_qubits: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { num_qubits, amps }
    }

    /// Takes arbitrary amplitudes; the caller is responsible for normalisation.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n = amps.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::dim("StateVector::from_amplitudes", &[n], &[]));
        }
        Ok(Self {
            num_qubits: n.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn rotate(&mut self, kind: GateKind, target: usize, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let stride = 1usize << target;
        let dim = self.amps.len();
        let mut base = 0;
        while base < dim {
            for i in base..base + stride {
                let j = i + stride;
                let (a, b) = (self.amps[i], self.amps[j]);
                let (na, nb) = match kind {
                    // [[c, -is], [-is, c]]
                    GateKind::Rx => (
                        Complex64::new(c * a.re + s * b.im, c * a.im - s * b.re),
                        Complex64::new(s * a.im + c * b.re, -s * a.re + c * b.im),
                    ),
                    // [[c, -s], [s, c]]
                    GateKind::Ry => (c * a - s * b, s * a + c * b),
                    // diag(e^{-iθ/2}, e^{iθ/2})
                    GateKind::Rz => (a * Complex64::new(c, -s), b * Complex64::new(c, s)),
                    GateKind::Cnot => unreachable!(),
                };
                self.amps[i] = na;
                self.amps[j] = nb;
            }
            base += 2 * stride;
        }
    }

    fn cnot(&mut self, control: usize, target: usize) {
        let (cm, tm) = (1usize << control, 1usize << target);
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amps.swap(i, i | tm);
            }
        }
    }

    /// Applies the Pauli generator of a rotation kind (X, Y or Z).
    fn apply_pauli(&mut self, kind: GateKind, target: usize) {
        let stride = 1usize << target;
        let dim = self.amps.len();
        let i_unit = Complex64::new(0.0, 1.0);
        let mut base = 0;
        while base < dim {
            for i in base..base + stride {
                let j = i + stride;
                let (a, b) = (self.amps[i], self.amps[j]);
                let (na, nb) = match kind {
                    GateKind::Rx => (b, a),
                    GateKind::Ry => (-i_unit * b, i_unit * a),
                    GateKind::Rz => (a, -b),
                    GateKind::Cnot => unreachable!(),
                };
                self.amps[i] = na;
                self.amps[j] = nb;
            }
            base += 2 * stride;
        }
    }

    fn apply_pauli_z(&mut self, wire: usize) {
        self.apply_pauli(GateKind::Rz, wire);
    }

    /// Applies `gate` with `angle` (ignored for CNOT).
    pub fn apply(&mut self, gate: &GateOp, angle: f64) -> Result<()> {
        gate.check_wires(self.num_qubits)?;
        self.apply_unchecked(gate, angle);
        Ok(())
    }

    fn apply_unchecked(&mut self, gate: &GateOp, angle: f64) {
        match gate.kind {
            GateKind::Cnot => self.cnot(gate.control.expect("checked"), gate.target),
            k => self.rotate(k, gate.target, angle),
        }
    }

    fn apply_inverse(&mut self, gate: &GateOp, angle: f64) {
        match gate.kind {
            // CNOT is self-inverse.
            GateKind::Cnot => self.cnot(gate.control.expect("checked"), gate.target),
            k => self.rotate(k, gate.target, -angle),
        }
    }

    /// ⟨Z⟩ on `wire`, clamped to [-1, 1] against rounding in the norm.
    pub fn expectation_z(&self, wire: usize) -> Result<f64> {
        if wire >= self.num_qubits {
            return Err(Error::Index {
                what: "wire",
                index: wire,
                limit: self.num_qubits,
            });
        }
        let m = 1usize << wire;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & m == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum::<f64>()
            .clamp(-1.0, 1.0))
    }
}

/// Returns a new state with `gate` applied.
pub fn apply_gate(state: &StateVector, gate: &GateOp, angle: f64) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply(gate, angle)?;
    Ok(out)
}

/// ⟨Z⟩ of `state` on `wire`.
pub fn expectation_z(state: &StateVector, wire: usize) -> Result<f64> {
    state.expectation_z(wire)
}

/// Gate list on a fixed register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<GateOp>,
}

impl Circuit {
    pub fn new(num_qubits: usize, gates: Vec<GateOp>) -> Result<Self> {
        for g in &gates {
            g.check_wires(num_qubits)?;
        }
        Ok(Self { num_qubits, gates })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    /// Number of parameter and input slots referenced by the gates.
    pub fn slot_counts(&self) -> (usize, usize) {
        let mut p = 0;
        let mut x = 0;
        for g in &self.gates {
            match g.angle {
                Some(Angle::Param(i)) => p = p.max(i + 1),
                Some(Angle::Input(i)) => x = x.max(i + 1),
                _ => {}
            }
        }
        (p, x)
    }

    fn resolve(&self, gate: &GateOp, params: &[f64], inputs: &[f64]) -> Result<f64> {
        match gate.angle {
            None => Ok(0.0),
            Some(Angle::Fixed(v)) => Ok(v),
            Some(Angle::Param(i)) => params.get(i).copied().ok_or_else(|| {
                Error::contract(format!("parameter slot {i} unresolved ({} supplied)", params.len()))
            }),
            Some(Angle::Input(i)) => inputs.get(i).copied().ok_or_else(|| {
                Error::contract(format!("input slot {i} unresolved ({} supplied)", inputs.len()))
            }),
        }
    }

    fn angles(&self, params: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
        self.gates
            .iter()
            .map(|g| self.resolve(g, params, inputs))
            .collect()
    }

    fn run_angles(&self, angles: &[f64]) -> StateVector {
        let mut state = StateVector::zero(self.num_qubits);
        for (g, &a) in self.gates.iter().zip(angles) {
            state.apply_unchecked(g, a);
        }
        state
    }
}

/// Runs `circuit` from `|0…0⟩`.
pub fn run_circuit(circuit: &Circuit, params: &[f64], inputs: &[f64]) -> Result<StateVector> {
    let angles = circuit.angles(params, inputs)?;
    Ok(circuit.run_angles(&angles))
}

fn check_observed(circuit: &Circuit, observed: &[usize]) -> Result<()> {
    for &w in observed {
        if w >= circuit.num_qubits {
            return Err(Error::Index {
                what: "wire",
                index: w,
                limit: circuit.num_qubits,
            });
        }
    }
    Ok(())
}

/// Derivatives of `⟨Z_w⟩` for each observed wire `w`.
///
/// Both matrices are row-major with one row per observed wire:
/// `d_params` is `[observed × params.len()]` and `d_inputs` is
/// `[observed × inputs.len()]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGradient {
    pub expectations: Vec<f64>,
    pub d_params: Vec<f64>,
    pub d_inputs: Vec<f64>,
    pub num_params: usize,
    pub num_inputs: usize,
}

impl CircuitGradient {
    fn zeros(observed: usize, num_params: usize, num_inputs: usize) -> Self {
        Self {
            expectations: vec![0.0; observed],
            d_params: vec![0.0; observed * num_params],
            d_inputs: vec![0.0; observed * num_inputs],
            num_params,
            num_inputs,
        }
    }

    fn accumulate(&mut self, obs: usize, angle: Option<Angle>, value: f64) {
        match angle {
            Some(Angle::Param(i)) => self.d_params[obs * self.num_params + i] += value,
            Some(Angle::Input(i)) => self.d_inputs[obs * self.num_inputs + i] += value,
            _ => {}
        }
    }

    pub fn d_param(&self, obs: usize, slot: usize) -> f64 {
        self.d_params[obs * self.num_params + slot]
    }

    pub fn d_input(&self, obs: usize, slot: usize) -> f64 {
        self.d_inputs[obs * self.num_inputs + slot]
    }
}

/// Adjoint-mode gradient: one forward run plus a reverse sweep carrying
/// one adjoint state per observable.
pub fn adjoint_gradient(
    circuit: &Circuit,
    params: &[f64],
    inputs: &[f64],
    observed: &[usize],
) -> Result<CircuitGradient> {
    check_observed(circuit, observed)?;
    let angles = circuit.angles(params, inputs)?;
    let mut phi = circuit.run_angles(&angles);
    let mut out = CircuitGradient::zeros(observed.len(), params.len(), inputs.len());

    let mut lambdas: Vec<StateVector> = Vec::with_capacity(observed.len());
    for (o, &w) in observed.iter().enumerate() {
        out.expectations[o] = phi.expectation_z(w)?;
        let mut l = phi.clone();
        l.apply_pauli_z(w);
        lambdas.push(l);
    }

    let mut mu = phi.clone();
    for (gate, &angle) in circuit.gates.iter().zip(&angles).rev() {
        // `phi` is the state just after `gate`.
        let slotted = matches!(gate.angle, Some(Angle::Param(_)) | Some(Angle::Input(_)));
        if gate.is_rotation() && slotted {
            mu.amps.copy_from_slice(&phi.amps);
            mu.apply_pauli(gate.kind, gate.target);
            // ∂⟨O⟩/∂θ = 2·Re⟨λ| (-i/2)·P |φ⟩ = Im⟨λ|P|φ⟩
            for (o, l) in lambdas.iter().enumerate() {
                out.accumulate(o, gate.angle, l.inner(&mu).im);
            }
        }
        phi.apply_inverse(gate, angle);
        for l in lambdas.iter_mut() {
            l.apply_inverse(gate, angle);
        }
    }
    Ok(out)
}

/// Parameter-shift gradient: for every rotation occurrence fed by a slot,
/// `[⟨Z⟩(θ+π/2) − ⟨Z⟩(θ−π/2)] / 2`, summed into that slot.
pub fn parameter_shift_gradient(
    circuit: &Circuit,
    params: &[f64],
    inputs: &[f64],
    observed: &[usize],
) -> Result<CircuitGradient> {
    check_observed(circuit, observed)?;
    for g in &circuit.gates {
        let slotted = matches!(g.angle, Some(Angle::Param(_)) | Some(Angle::Input(_)));
        if slotted && !g.is_rotation() {
            return Err(Error::UnsupportedGate {
                method: "parameter shift",
                gate: format!("{g:?}"),
            });
        }
    }
    let angles = circuit.angles(params, inputs)?;
    let mut out = CircuitGradient::zeros(observed.len(), params.len(), inputs.len());
    let base = circuit.run_angles(&angles);
    for (o, &w) in observed.iter().enumerate() {
        out.expectations[o] = base.expectation_z(w)?;
    }

    let mut shifted = angles.clone();
    for (k, gate) in circuit.gates.iter().enumerate() {
        if !matches!(gate.angle, Some(Angle::Param(_)) | Some(Angle::Input(_))) {
            continue;
        }
        shifted[k] = angles[k] + FRAC_PI_2;
        let plus = circuit.run_angles(&shifted);
        shifted[k] = angles[k] - FRAC_PI_2;
        let minus = circuit.run_angles(&shifted);
        shifted[k] = angles[k];
        for (o, &w) in observed.iter().enumerate() {
            let d = 0.5 * (plus.expectation_z(w)? - minus.expectation_z(w)?);
            out.accumulate(o, gate.angle, d);
        }
    }
    Ok(out)
}
