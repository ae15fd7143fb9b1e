//! Encoder-only forecasting models: the vanilla transformer, the reduced
//! classical variant and the hybrid QASA model.
//!
//! All graph-building functions work on a batch laid out as a
//! `[batch·L × d]` matrix (sample-major), so position-wise projections run
//! as one large GEMM while attention is evaluated per sample and head.

mod checkpoint;
mod config;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{ModelConfig, Variant};
pub use params::{ParamEntry, ParamKind, ParamStore};

use crate::autodiff::{Tape, Tensor, Var};
use crate::circuit::{QasaCircuit, QasaCircuitSpec};
use crate::error::{Error, Result};
use crate::rng::{streams, SeedStream};

/// Fixed sinusoidal positional encoding, `[L × d]`.
pub fn sinusoidal_pe(seq_len: usize, d: usize) -> Result<Tensor> {
    if d % 2 != 0 {
        return Err(Error::contract(format!("positional encoding needs even d, got {d}")));
    }
    let mut data = vec![0.0; seq_len * d];
    for pos in 0..seq_len {
        for i in 0..d / 2 {
            let freq = 10000f64.powf(2.0 * i as f64 / d as f64);
            let a = pos as f64 / freq;
            data[pos * d + 2 * i] = a.sin();
            data[pos * d + 2 * i + 1] = a.cos();
        }
    }
    Tensor::matrix(seq_len, d, data)
}

/// Tape handles for one attention block.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct FfnVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct NormVars {
    pub gain: Var,
    pub bias: Var,
}

/// Multi-head self-attention over each `seq_len`-row block of `x`.
///
/// The `d × d` projection matrices hold the per-head `d × d_k` matrices as
/// consecutive column blocks, so head `j` reads columns `j·d_k..(j+1)·d_k`.
pub fn multi_head_attention(
    tape: &mut Tape,
    x: Var,
    w: &AttentionVars,
    seq_len: usize,
    heads: usize,
) -> Result<Var> {
    let (rows, d) = match tape.shape(x) {
        [r, c] => (*r, *c),
        s => return Err(Error::dim("multi_head_attention", s, &[0, 0])),
    };
    if heads == 0 || d % heads != 0 {
        return Err(Error::dim("multi_head_attention", &[d], &[heads]));
    }
    if seq_len == 0 || rows % seq_len != 0 {
        return Err(Error::dim("multi_head_attention", &[rows], &[seq_len]));
    }
    let dk = d / heads;
    let inv_sqrt_dk = 1.0 / (dk as f64).sqrt();
    let q = tape.matmul(x, w.w_q)?;
    let k = tape.matmul(x, w.w_k)?;
    let v = tape.matmul(x, w.w_v)?;
    let mut samples = Vec::with_capacity(rows / seq_len);
    for b in 0..rows / seq_len {
        let (qb, kb, vb) = if rows == seq_len {
            (q, k, v)
        } else {
            (
                tape.slice_rows(q, b * seq_len, seq_len)?,
                tape.slice_rows(k, b * seq_len, seq_len)?,
                tape.slice_rows(v, b * seq_len, seq_len)?,
            )
        };
        let mut head_out = Vec::with_capacity(heads);
        for j in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (qb, kb, vb)
            } else {
                (
                    tape.slice_cols(qb, j * dk, dk)?,
                    tape.slice_cols(kb, j * dk, dk)?,
                    tape.slice_cols(vb, j * dk, dk)?,
                )
            };
            let kt = tape.transpose(kh)?;
            let logits = tape.matmul(qh, kt)?;
            let logits = tape.scale(logits, inv_sqrt_dk);
            let attn = tape.softmax_last(logits)?;
            head_out.push(tape.matmul(attn, vh)?);
        }
        samples.push(if heads == 1 {
            head_out[0]
        } else {
            tape.concat_cols(&head_out)?
        });
    }
    let concat = if samples.len() == 1 {
        samples[0]
    } else {
        tape.concat_rows(&samples)?
    };
    tape.matmul(concat, w.w_o)
}

/// `GELU(x·W1 + b1)·W2 + b2`, row-wise.
pub fn ffn(tape: &mut Tape, x: Var, w: &FfnVars) -> Result<Var> {
    let h = tape.matmul(x, w.w1)?;
    let h = tape.add_bias(h, w.b1)?;
    let h = tape.gelu(h);
    let o = tape.matmul(h, w.w2)?;
    tape.add_bias(o, w.b2)
}

/// Post-norm encoder layer: `LN(h + MHSA(h))`, then `LN(z + FFN(z))`.
pub fn transformer_layer(
    tape: &mut Tape,
    h: Var,
    attn: &AttentionVars,
    norm1: &NormVars,
    ffn_w: &FfnVars,
    norm2: &NormVars,
    seq_len: usize,
    heads: usize,
    eps: f64,
) -> Result<Var> {
    let a = multi_head_attention(tape, h, attn, seq_len, heads)?;
    let r = tape.add(h, a)?;
    let z = tape.layer_norm(r, norm1.gain, norm1.bias, eps)?;
    let f = ffn(tape, z, ffn_w)?;
    let r2 = tape.add(z, f)?;
    tape.layer_norm(r2, norm2.gain, norm2.bias, eps)
}

#[derive(Clone, Copy, Debug)]
pub struct QuantumVars {
    /// `[d × n]` (the transpose of the `n × d` projection).
    pub w_q: Var,
    /// `[n × d]`.
    pub w_o: Var,
    /// `[L_q × (2n+1)]`.
    pub theta: Var,
}

/// Residual quantum projection: `x_i + W_o·QC(tanh(W_q·x_i) + t)` per row.
pub fn quantum_layer(
    tape: &mut Tape,
    x: Var,
    t: f64,
    w: &QuantumVars,
    circuit: &QasaCircuit,
    trace: Option<&mut Vec<ShapeRecord>>,
) -> Result<Var> {
    let proj = tape.matmul(x, w.w_q)?;
    let proj = tape.tanh(proj);
    let h_q = tape.add_const(proj, t);
    let qc = circuit.apply_on_tape(tape, h_q, w.theta)?;
    let back = tape.matmul(qc, w.w_o)?;
    let out = tape.add(x, back)?;
    if let Some(tr) = trace {
        tr.push(ShapeRecord::new("QuantumLayer (QNN)", tape.shape(x), tape.shape(out)));
        tr.push(ShapeRecord::new("QuantumLayer: Linear -> R^n", tape.shape(x), tape.shape(h_q)));
        tr.push(ShapeRecord::new("QuantumLayer: PQC -> R^n", tape.shape(h_q), tape.shape(qc)));
        tr.push(ShapeRecord::new(
            "QuantumLayer: Linear -> R^d + Residual",
            tape.shape(qc),
            tape.shape(out),
        ));
    }
    Ok(out)
}

/// `LN(h + MHSA(h))` → quantum layer → `LN(z + FFN(z))`.
#[allow(clippy::too_many_arguments)]
pub fn quantum_encoder_layer(
    tape: &mut Tape,
    h: Var,
    attn: &AttentionVars,
    norm1: &NormVars,
    quantum: &QuantumVars,
    ffn_w: &FfnVars,
    norm2: &NormVars,
    circuit: &QasaCircuit,
    t: f64,
    seq_len: usize,
    heads: usize,
    eps: f64,
    trace: Option<&mut Vec<ShapeRecord>>,
) -> Result<Var> {
    let a = multi_head_attention(tape, h, attn, seq_len, heads)?;
    let r = tape.add(h, a)?;
    let h1 = tape.layer_norm(r, norm1.gain, norm1.bias, eps)?;
    let z = quantum_layer(tape, h1, t, quantum, circuit, trace)?;
    let f = ffn(tape, z, ffn_w)?;
    let r2 = tape.add(z, f)?;
    tape.layer_norm(r2, norm2.gain, norm2.bias, eps)
}

/// One layer-boundary shape observation (per sample).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeRecord {
    pub layer: String,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

impl ShapeRecord {
    fn new(layer: &str, input: &[usize], output: &[usize]) -> Self {
        Self {
            layer: layer.to_string(),
            input: input.to_vec(),
            output: output.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct AttnIdx {
    w_q: usize,
    w_k: usize,
    w_v: usize,
    w_o: usize,
}

#[derive(Clone, Copy, Debug)]
struct FfnIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Copy, Debug)]
struct NormIdx {
    gain: usize,
    bias: usize,
}

#[derive(Clone, Copy, Debug)]
struct QuantumIdx {
    w_q: usize,
    w_o: usize,
    theta: usize,
}

#[derive(Clone, Copy, Debug)]
struct LayerIdx {
    attn: AttnIdx,
    norm1: NormIdx,
    quantum: Option<QuantumIdx>,
    ffn: FfnIdx,
    norm2: NormIdx,
}

#[derive(Clone, Copy, Debug)]
enum HeadIdx {
    Linear { w: usize, b: usize },
    Mlp { w1: usize, b1: usize, w2: usize, b2: usize },
}

#[derive(Clone, Debug)]
struct Layout {
    embed_w: usize,
    embed_b: usize,
    embed_norm: Option<NormIdx>,
    layers: Vec<LayerIdx>,
    head: HeadIdx,
}

struct Builder<'a> {
    store: ParamStore,
    rng: SeedStream,
    cfg: &'a ModelConfig,
}

impl Builder<'_> {
    fn weight(&mut self, path: String, rows: usize, cols: usize) -> usize {
        let std = self.cfg.init_std;
        let data = (0..rows * cols).map(|_| self.rng.normal_with(0.0, std)).collect();
        self.store.push(path, ParamKind::Weight, Tensor::matrix(rows, cols, data).expect("shape"))
    }

    fn bias(&mut self, path: String, n: usize) -> usize {
        self.store.push(path, ParamKind::Bias, Tensor::zeros(&[n]))
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIdx {
        NormIdx {
            gain: self
                .store
                .push(format!("{prefix}.gain"), ParamKind::Norm, Tensor::full(&[d], 1.0)),
            bias: self
                .store
                .push(format!("{prefix}.bias"), ParamKind::Norm, Tensor::zeros(&[d])),
        }
    }
}

/// Builds the parameter registry in its canonical order. Paths:
///
/// ```text
/// embed.w [1×d], embed.b [d], (embed.norm.gain, embed.norm.bias  if enabled)
/// layers.{i}.attn.{w_q,w_k,w_v,w_o} [d×d]
/// layers.{i}.norm1.{gain,bias} [d]
/// layers.{i}.quantum.{w_q [d×n], w_o [n×d], theta [L_q×(2n+1)]}   (qasa, last layer)
/// layers.{i}.ffn.{w1 [d×d_ff], b1 [d_ff], w2 [d_ff×d], b2 [d]}
/// layers.{i}.norm2.{gain,bias} [d]
/// head.{w [d×1], b [1]}                                    (qasa)
/// head.{w1 [d×h], b1 [h], w2 [h×1], b2 [1]}                (baselines)
/// ```
fn build_params(cfg: &ModelConfig, spec: Option<QasaCircuitSpec>) -> (ParamStore, Layout) {
    let d = cfg.d_model;
    let mut b = Builder {
        store: ParamStore::new(),
        rng: SeedStream::new(cfg.seed, streams::WEIGHTS),
        cfg,
    };
    let embed_w = b.weight("embed.w".into(), 1, d);
    let embed_b = b.bias("embed.b".into(), d);
    let embed_norm = cfg.embed_norm().then(|| b.norm("embed.norm", d));
    let mut layers = Vec::with_capacity(cfg.layers);
    for i in 0..cfg.layers {
        let p = format!("layers.{i}");
        let attn = AttnIdx {
            w_q: b.weight(format!("{p}.attn.w_q"), d, d),
            w_k: b.weight(format!("{p}.attn.w_k"), d, d),
            w_v: b.weight(format!("{p}.attn.w_v"), d, d),
            w_o: b.weight(format!("{p}.attn.w_o"), d, d),
        };
        let norm1 = b.norm(&format!("{p}.norm1"), d);
        let is_quantum = cfg.variant.is_quantum() && i + 1 == cfg.layers;
        let quantum = match (is_quantum, spec) {
            (true, Some(spec)) => {
                let n = spec.qubits;
                let w_q = b.weight(format!("{p}.quantum.w_q"), d, n);
                let w_o = b.weight(format!("{p}.quantum.w_o"), n, d);
                let theta = Tensor::matrix(spec.layers, spec.params_per_layer(), spec.init_theta(cfg.seed))
                    .expect("theta shape");
                let theta = b.store.push(format!("{p}.quantum.theta"), ParamKind::Angle, theta);
                Some(QuantumIdx { w_q, w_o, theta })
            }
            _ => None,
        };
        let ffn = FfnIdx {
            w1: b.weight(format!("{p}.ffn.w1"), d, cfg.d_ff),
            b1: b.bias(format!("{p}.ffn.b1"), cfg.d_ff),
            w2: b.weight(format!("{p}.ffn.w2"), cfg.d_ff, d),
            b2: b.bias(format!("{p}.ffn.b2"), d),
        };
        let norm2 = b.norm(&format!("{p}.norm2"), d);
        layers.push(LayerIdx {
            attn,
            norm1,
            quantum,
            ffn,
            norm2,
        });
    }
    let head = if cfg.variant.is_quantum() {
        HeadIdx::Linear {
            w: b.weight("head.w".into(), d, 1),
            b: b.bias("head.b".into(), 1),
        }
    } else {
        let h = cfg.head_hidden();
        HeadIdx::Mlp {
            w1: b.weight("head.w1".into(), d, h),
            b1: b.bias("head.b1".into(), h),
            w2: b.weight("head.w2".into(), h, 1),
            b2: b.bias("head.b2".into(), 1),
        }
    };
    (
        b.store,
        Layout {
            embed_w,
            embed_b,
            embed_norm,
            layers,
            head,
        },
    )
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
    circuit: Option<QasaCircuit>,
    pe: Tensor,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let spec = if config.variant.is_quantum() {
            Some(QasaCircuitSpec::new(config.qubits, config.q_layers)?)
        } else {
            None
        };
        let (params, layout) = build_params(&config, spec);
        let circuit = spec
            .map(|s| QasaCircuit::new(s, config.gradient_engine))
            .transpose()?;
        let pe = sinusoidal_pe(config.seq_len, config.d_model)?;
        Ok(Self {
            config,
            params,
            layout,
            circuit,
            pe,
        })
    }

    /// Rebuilds a model from a config and a registry with the exact paths
    /// and shapes that config produces.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = Self::new(config)?;
        if params.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for (want, got) in model.params.entries().iter().zip(params.entries()) {
            if want.path != got.path || want.tensor.shape() != got.tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: expected {} {:?}, found {} {:?}",
                    want.path,
                    want.tensor.shape(),
                    got.path,
                    got.tensor.shape()
                )));
            }
        }
        for (dst, src) in model.params.entries_mut().iter_mut().zip(params.entries()) {
            dst.tensor = src.tensor.clone();
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn circuit(&self) -> Option<&QasaCircuit> {
        self.circuit.as_ref()
    }

    /// Circuit evaluations performed by this model (0 for classical variants).
    pub fn quantum_invocations(&self) -> u64 {
        self.circuit.as_ref().map_or(0, |c| c.evaluations())
    }

    /// Puts every parameter on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .entries()
            .iter()
            .map(|e| tape.leaf(e.tensor.clone(), trainable))
            .collect()
    }

    fn check_windows(&self, windows: &[&[f64]]) -> Result<()> {
        if windows.is_empty() {
            return Err(Error::contract("forward on an empty batch"));
        }
        for w in windows {
            if w.len() != self.config.seq_len {
                return Err(Error::dim("model input", &[self.config.seq_len, 1], &[w.len(), 1]));
            }
        }
        Ok(())
    }

    /// `LN(x·W_e + b_e) + PE` (norm only when enabled), `[B·L × d]`.
    pub fn embed(&self, tape: &mut Tape, vars: &[Var], x: Var, batch: usize) -> Result<Var> {
        Ok(self.embed_parts(tape, vars, x, batch)?.1)
    }

    /// Returns the projected (and normalised) input and the sum with PE.
    fn embed_parts(&self, tape: &mut Tape, vars: &[Var], x: Var, batch: usize) -> Result<(Var, Var)> {
        let (rows, cols) = match tape.shape(x) {
            [r, c] => (*r, *c),
            s => return Err(Error::dim("embed", s, &[self.config.seq_len, 1])),
        };
        if cols != 1 || rows != batch * self.config.seq_len {
            return Err(Error::dim("embed", &[rows, cols], &[batch * self.config.seq_len, 1]));
        }
        let l = &self.layout;
        let h = tape.matmul(x, vars[l.embed_w])?;
        let mut h = tape.add_bias(h, vars[l.embed_b])?;
        if let Some(n) = l.embed_norm {
            h = tape.layer_norm(h, vars[n.gain], vars[n.bias], self.config.layer_norm_eps)?;
        }
        let pe = if batch == 1 {
            self.pe.clone()
        } else {
            let mut data = Vec::with_capacity(batch * self.pe.numel());
            for _ in 0..batch {
                data.extend_from_slice(self.pe.data());
            }
            Tensor::matrix(batch * self.config.seq_len, self.config.d_model, data)?
        };
        let pe = tape.constant(pe);
        Ok((h, tape.add(h, pe)?))
    }

    /// Builds the forward graph for a batch of windows; returns `[B × 1]`.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        windows: &[&[f64]],
        mut trace: Option<&mut Vec<ShapeRecord>>,
    ) -> Result<Var> {
        self.check_windows(windows)?;
        let cfg = &self.config;
        let (batch, seq) = (windows.len(), cfg.seq_len);
        let eps = cfg.layer_norm_eps;
        let mut flat = Vec::with_capacity(batch * seq);
        for w in windows {
            flat.extend_from_slice(w);
        }
        let x = tape.constant(Tensor::matrix(batch * seq, 1, flat)?);
        let per = |s: &[usize]| -> Vec<usize> {
            let mut v = s.to_vec();
            if let Some(r) = v.first_mut() {
                *r /= batch;
            }
            v
        };
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(ShapeRecord::new("Input", &per(tape.shape(x)), &per(tape.shape(x))));
        }

        let (proj, mut h) = self.embed_parts(tape, vars, x, batch)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(ShapeRecord::new("Linear Embedding", &per(tape.shape(x)), &per(tape.shape(proj))));
            tr.push(ShapeRecord::new("Positional Encoding", &per(tape.shape(proj)), &per(tape.shape(h))));
        }

        let l = &self.layout;
        for (i, li) in l.layers.iter().enumerate() {
            let attn = AttentionVars {
                w_q: vars[li.attn.w_q],
                w_k: vars[li.attn.w_k],
                w_v: vars[li.attn.w_v],
                w_o: vars[li.attn.w_o],
            };
            let n1 = NormVars {
                gain: vars[li.norm1.gain],
                bias: vars[li.norm1.bias],
            };
            let fw = FfnVars {
                w1: vars[li.ffn.w1],
                b1: vars[li.ffn.b1],
                w2: vars[li.ffn.w2],
                b2: vars[li.ffn.b2],
            };
            let n2 = NormVars {
                gain: vars[li.norm2.gain],
                bias: vars[li.norm2.bias],
            };
            let input_shape = per(tape.shape(h));
            let (out, name) = match (li.quantum, &self.circuit) {
                (Some(q), Some(circuit)) => {
                    let qv = QuantumVars {
                        w_q: vars[q.w_q],
                        w_o: vars[q.w_o],
                        theta: vars[q.theta],
                    };
                    let mut sub = Vec::new();
                    let out = quantum_encoder_layer(
                        tape,
                        h,
                        &attn,
                        &n1,
                        &qv,
                        &fw,
                        &n2,
                        circuit,
                        cfg.t_scaled(),
                        seq,
                        cfg.heads,
                        eps,
                        trace.is_some().then_some(&mut sub),
                    )?;
                    if let Some(tr) = trace.as_deref_mut() {
                        tr.push(ShapeRecord::new("Quantum Encoder Layer", &input_shape, &per(tape.shape(out))));
                        for mut r in sub {
                            r.input = per(&r.input);
                            r.output = per(&r.output);
                            tr.push(r);
                        }
                    }
                    (out, None)
                }
                _ => (
                    transformer_layer(tape, h, &attn, &n1, &fw, &n2, seq, cfg.heads, eps)?,
                    Some(format!("Transformer Layer {i}")),
                ),
            };
            if let (Some(tr), Some(name)) = (trace.as_deref_mut(), name) {
                tr.push(ShapeRecord::new(&name, &input_shape, &per(tape.shape(out))));
            }
            h = out;
        }

        let last_rows: Vec<usize> = (0..batch).map(|b| b * seq + seq - 1).collect();
        let last = tape.gather_rows(h, &last_rows)?;
        let y = match l.head {
            HeadIdx::Linear { w, b } => {
                let o = tape.matmul(last, vars[w])?;
                tape.add_bias(o, vars[b])?
            }
            HeadIdx::Mlp { w1, b1, w2, b2 } => {
                let o = tape.matmul(last, vars[w1])?;
                let o = tape.add_bias(o, vars[b1])?;
                let o = tape.gelu(o);
                let o = tape.matmul(o, vars[w2])?;
                tape.add_bias(o, vars[b2])?
            }
        };
        if let Some(tr) = trace {
            tr.push(ShapeRecord::new("Final Linear", &tape.shape(last)[1..], &tape.shape(y)[1..]));
        }
        Ok(y)
    }

    /// Scalar prediction for one window.
    pub fn forward(&self, window: &[f64]) -> Result<f64> {
        Ok(self.predict(&[window])?[0])
    }

    /// Predictions for a batch of windows (no gradients recorded).
    pub fn predict(&self, windows: &[&[f64]]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let y = self.forward_on_tape(&mut tape, &vars, windows, None)?;
        Ok(tape.value(y).data().to_vec())
    }

    /// Per-sample layer-boundary shapes for one forward pass.
    pub fn trace_shapes(&self, window: &[f64]) -> Result<Vec<ShapeRecord>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let mut trace = Vec::new();
        self.forward_on_tape(&mut tape, &vars, &[window], Some(&mut trace))?;
        Ok(trace)
    }

    /// Mean squared error over the batch and its gradient for every
    /// parameter, in registry order.
    pub fn loss_and_grads(&self, windows: &[&[f64]], targets: &[f64]) -> Result<(f64, Vec<Tensor>)> {
        if windows.len() != targets.len() {
            return Err(Error::dim("loss_and_grads", &[windows.len()], &[targets.len()]));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, true);
        let pred = self.forward_on_tape(&mut tape, &vars, windows, None)?;
        let target = tape.constant(Tensor::matrix(targets.len(), 1, targets.to_vec())?);
        let loss = crate::train::mse_loss(&mut tape, pred, target)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        Ok((value, vars.iter().map(|&v| grads.wrt(v)).collect()))
    }
}
