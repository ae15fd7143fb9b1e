//! Shared oracles: a dense unitary-product simulator built from Kronecker
//! products, central finite differences, and small fixtures.
#![allow(dead_code)]

use num_complex::Complex64;
use qasa::model::{Model, ModelConfig, Variant};
use qasa::qsim::{Angle, Circuit, GateKind, GateOp};
use qasa::rng::SeedStream;

type Mat = Vec<Complex64>;

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn kron(a: &Mat, da: usize, b: &Mat, db: usize) -> Mat {
    let d = da * db;
    let mut out = vec![c(0.0, 0.0); d * d];
    for i in 0..da {
        for j in 0..da {
            for k in 0..db {
                for l in 0..db {
                    out[(i * db + k) * d + j * db + l] = a[i * da + j] * b[k * db + l];
                }
            }
        }
    }
    out
}

fn matmul(a: &Mat, b: &Mat, d: usize) -> Mat {
    let mut out = vec![c(0.0, 0.0); d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

fn identity(d: usize) -> Mat {
    let mut m = vec![c(0.0, 0.0); d * d];
    for i in 0..d {
        m[i * d + i] = c(1.0, 0.0);
    }
    m
}

/// `ops[w]` acts on wire `w`; wire 0 is the least significant index bit,
/// so it sits rightmost in the Kronecker product.
fn embed(ops: &[Mat]) -> Mat {
    let mut m = vec![c(1.0, 0.0)];
    let mut dim = 1;
    for op in ops.iter().rev() {
        m = kron(&m, dim, op, 2);
        dim *= 2;
    }
    m
}

pub fn rotation_2x2(kind: GateKind, theta: f64) -> Mat {
    let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    match kind {
        GateKind::Rx => vec![c(co, 0.0), c(0.0, -si), c(0.0, -si), c(co, 0.0)],
        GateKind::Ry => vec![c(co, 0.0), c(-si, 0.0), c(si, 0.0), c(co, 0.0)],
        GateKind::Rz => vec![c(co, -si), c(0.0, 0.0), c(0.0, 0.0), c(co, si)],
        GateKind::Cnot => panic!("not a rotation"),
    }
}

pub fn dense_gate(q: usize, gate: &GateOp, angle: f64) -> Mat {
    let id2 = identity(2);
    match gate.kind {
        GateKind::Cnot => {
            let ctl = gate.control.expect("cnot control");
            let p0 = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
            let p1 = vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
            let x = vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
            let mut a = vec![id2.clone(); q];
            a[ctl] = p0;
            let mut b = vec![id2; q];
            b[ctl] = p1;
            b[gate.target] = x;
            let (ma, mb) = (embed(&a), embed(&b));
            ma.iter().zip(&mb).map(|(u, v)| u + v).collect()
        }
        kind => {
            let mut ops = vec![id2; q];
            ops[gate.target] = rotation_2x2(kind, angle);
            embed(&ops)
        }
    }
}

pub fn resolve(angle: Option<Angle>, params: &[f64], inputs: &[f64]) -> f64 {
    match angle {
        None => 0.0,
        Some(Angle::Fixed(v)) => v,
        Some(Angle::Param(i)) => params[i],
        Some(Angle::Input(i)) => inputs[i],
    }
}

/// Full circuit unitary as the ordered product of dense gate matrices.
pub fn dense_unitary(circuit: &Circuit, params: &[f64], inputs: &[f64]) -> Mat {
    let q = circuit.num_qubits();
    let d = 1 << q;
    let mut u = identity(d);
    for g in circuit.gates() {
        let m = dense_gate(q, g, resolve(g.angle, params, inputs));
        u = matmul(&m, &u, d);
    }
    u
}

/// `U |0…0⟩`, i.e. the first column of the unitary.
pub fn oracle_state(circuit: &Circuit, params: &[f64], inputs: &[f64]) -> Vec<Complex64> {
    let u = dense_unitary(circuit, params, inputs);
    let d = 1 << circuit.num_qubits();
    (0..d).map(|i| u[i * d]).collect()
}

pub fn oracle_expectation_z(state: &[Complex64], wire: usize) -> f64 {
    state
        .iter()
        .enumerate()
        .map(|(i, a)| if (i >> wire) & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

/// Random circuit on `n` wires with `len` gates drawing angles from
/// parameter, input and fixed slots (with repeats), plus matching values.
pub fn random_circuit(seed: u64, n: usize, len: usize) -> (Circuit, Vec<f64>, Vec<f64>) {
    let mut rng = SeedStream::new(seed, 99);
    let (np, ni) = (1 + rng.below(4) as usize, 1 + rng.below(3) as usize);
    let mut gates = Vec::with_capacity(len);
    for _ in 0..len {
        let pick = rng.below(if n > 1 { 4 } else { 3 });
        let target = rng.below(n as u64) as usize;
        if pick == 3 {
            let mut ctl = rng.below(n as u64 - 1) as usize;
            if ctl >= target {
                ctl += 1;
            }
            gates.push(GateOp::cnot(ctl, target));
            continue;
        }
        let kind = [GateKind::Rx, GateKind::Ry, GateKind::Rz][pick as usize];
        let angle = match rng.below(3) {
            0 => Angle::Param(rng.below(np as u64) as usize),
            1 => Angle::Input(rng.below(ni as u64) as usize),
            _ => Angle::Fixed(rng.uniform_range(-3.0, 3.0)),
        };
        gates.push(GateOp::rotation(kind, target, angle));
    }
    let params = (0..np).map(|_| rng.uniform_range(-3.2, 3.2)).collect();
    let inputs = (0..ni).map(|_| rng.uniform_range(-3.2, 3.2)).collect();
    (Circuit::new(n, gates).expect("valid wires"), params, inputs)
}

pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        seq_len: 4,
        d_model: 8,
        heads: 2,
        d_ff: 16,
        layers: 2,
        qubits: 2,
        q_layers: 1,
        ..ModelConfig::desk(variant)
    }
}

pub fn random_windows(seed: u64, batch: usize, len: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = SeedStream::new(seed, 5);
    let w = (0..batch).map(|_| (0..len).map(|_| rng.normal()).collect()).collect();
    let t = (0..batch).map(|_| rng.normal()).collect();
    (w, t)
}

#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

/// Compares every parameter gradient of the batch MSE loss against central
/// differences with step `h`. Passes when the relative error is below
/// `rel_tol`, or the absolute error below `abs_tol` where `|grad| < small`.
pub fn check_model_gradients(
    model: &Model,
    windows: &[Vec<f64>],
    targets: &[f64],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
    small: f64,
) -> GradCheck {
    let refs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
    let (_, grads) = model.loss_and_grads(&refs, targets).expect("gradients");
    let mut probe = model.clone();
    let mut out = GradCheck::default();
    for (pi, g) in grads.iter().enumerate() {
        let path = model.params().entries()[pi].path.clone();
        for j in 0..g.numel() {
            let orig = probe.params().tensor(pi).data()[j];
            let mut eval = |v: f64| {
                probe.params_mut().entries_mut()[pi].tensor.data_mut()[j] = v;
                qasa::train::mse(&probe.predict(&refs).expect("forward"), targets).expect("loss")
            };
            let fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
            eval(orig);
            let ad = g.data()[j];
            let abs = (ad - fd).abs();
            let rel = abs / ad.abs().max(fd.abs()).max(1e-300);
            let ok = if ad.abs() < small { abs < abs_tol } else { rel < rel_tol };
            if ad.abs() >= small {
                out.worst_rel = out.worst_rel.max(rel);
            }
            if !ok {
                out.failures.push(format!("{path}[{j}]: autodiff {ad:e}, fd {fd:e}"));
            }
            out.checked += 1;
        }
    }
    out
}
