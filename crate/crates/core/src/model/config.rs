use crate::circuit::GradientEngine;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Vanilla encoder stack with an MLP head.
    Transformer,
    /// All-classical reduced variant with an MLP head.
    QasaClassical,
    /// `N-1` classical layers, one quantum encoder layer, linear head.
    #[default]
    Qasa,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Transformer, Variant::QasaClassical, Variant::Qasa];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Transformer => "transformer",
            Variant::QasaClassical => "qasa_classical",
            Variant::Qasa => "qasa",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "transformer" | "vanilla" => Some(Variant::Transformer),
            "qasa_classical" | "classical" => Some(Variant::QasaClassical),
            "qasa" | "quantum" => Some(Variant::Qasa),
            _ => None,
        }
    }

    pub fn is_quantum(self) -> bool {
        matches!(self, Variant::Qasa)
    }
}

/// Architecture hyper-parameters. Every field has a default (the desk-scale
/// QASA configuration), so `{}` deserializes to a valid config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Sequence length `L`.
    pub seq_len: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    /// Encoder layer count `N` (for `qasa` the last one is quantum).
    pub layers: usize,
    /// Data qubits `n` (qasa only).
    pub qubits: usize,
    /// Circuit layers `L_q` (qasa only).
    pub q_layers: usize,
    pub seed: u64,
    /// `t = seq_len / t_ref` is added to the circuit input angles.
    pub t_ref: f64,
    /// LayerNorm after the input projection. `None` picks the variant
    /// default: on for `qasa`, off for the baselines.
    pub embed_norm: Option<bool>,
    /// Hidden width of the baselines' 2-layer head; `None` means `d_model`.
    pub head_hidden: Option<usize>,
    pub layer_norm_eps: f64,
    pub init_std: f64,
    pub gradient_engine: GradientEngine,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk(Variant::Qasa)
    }
}

impl ModelConfig {
    /// Full-size configuration (d=256, d_ff=1024, N=4, 8 qubits, 4 circuit
    /// layers, L=50). The vanilla baseline uses 8 heads, the others 4.
    pub fn full(variant: Variant) -> Self {
        Self {
            variant,
            seq_len: 50,
            d_model: 256,
            heads: if variant == Variant::Transformer { 8 } else { 4 },
            d_ff: 1024,
            layers: 4,
            qubits: 8,
            q_layers: 4,
            seed: 42,
            t_ref: 50.0,
            embed_norm: None,
            head_hidden: None,
            layer_norm_eps: crate::autodiff::LAYER_NORM_EPS,
            init_std: 0.02,
            gradient_engine: GradientEngine::Adjoint,
        }
    }

    /// Desk-scale configuration (d=64, H=4, d_ff=128, N=3, 4 qubits, 2
    /// circuit layers, L=32). The vanilla baseline keeps twice the heads.
    pub fn desk(variant: Variant) -> Self {
        Self {
            seq_len: 32,
            d_model: 64,
            heads: if variant == Variant::Transformer { 8 } else { 4 },
            d_ff: 128,
            layers: 3,
            qubits: 4,
            q_layers: 2,
            ..Self::full(variant)
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn embed_norm(&self) -> bool {
        self.embed_norm.unwrap_or(self.variant == Variant::Qasa)
    }

    pub fn head_hidden(&self) -> usize {
        self.head_hidden.unwrap_or(self.d_model)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn classical_layers(&self) -> usize {
        match self.variant {
            Variant::Qasa => self.layers - 1,
            _ => self.layers,
        }
    }

    pub fn t_scaled(&self) -> f64 {
        self.seq_len as f64 / self.t_ref
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |field: &str, v: usize| {
            if v == 0 {
                Err(Error::config(format!("model.{field}"), "must be positive"))
            } else {
                Ok(())
            }
        };
        pos("seq_len", self.seq_len)?;
        pos("d_model", self.d_model)?;
        pos("heads", self.heads)?;
        pos("d_ff", self.d_ff)?;
        pos("layers", self.layers)?;
        if self.d_model % self.heads != 0 {
            return Err(Error::config(
                "model.heads",
                format!("d_model {} not divisible by heads {}", self.d_model, self.heads),
            ));
        }
        if self.d_model % 2 != 0 {
            return Err(Error::config(
                "model.d_model",
                "sinusoidal positional encoding needs an even d_model",
            ));
        }
        if self.variant.is_quantum() {
            pos("qubits", self.qubits)?;
            pos("q_layers", self.q_layers)?;
        }
        if let Some(h) = self.head_hidden {
            pos("head_hidden", h)?;
        }
        if !(self.t_ref.is_finite() && self.t_ref > 0.0) {
            return Err(Error::config("model.t_ref", "must be finite and positive"));
        }
        if !(self.layer_norm_eps.is_finite() && self.layer_norm_eps >= 0.0) {
            return Err(Error::config("model.layer_norm_eps", "must be finite and >= 0"));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::config("model.init_std", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_desk_qasa() {
        let c: ModelConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ModelConfig::desk(Variant::Qasa));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_field_rejected() {
        let err = serde_json::from_str::<ModelConfig>(r#"{"dmodel": 3}"#).unwrap_err();
        assert!(err.to_string().contains("dmodel"));
    }

    #[test]
    fn heads_must_divide_width() {
        let c = ModelConfig {
            heads: 3,
            ..ModelConfig::desk(Variant::Qasa)
        };
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "model.heads"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classical_variants_ignore_qubits() {
        let c = ModelConfig {
            qubits: 0,
            ..ModelConfig::desk(Variant::QasaClassical)
        };
        c.validate().unwrap();
        let q = c.with_variant(Variant::Qasa);
        assert!(q.validate().is_err());
    }
}
