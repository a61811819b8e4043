//! Transformer encoder with optional span and classification heads.

use candle_core::{DType, Device, Module, Tensor, D};
use candle_nn::{Embedding, Linear};
use ficle_core::encoding::{EncodedInput, HashTokenizer};
use serde::{Deserialize, Serialize};

use crate::config::EncoderConfig;
use crate::error::{ModelError, Result};
use crate::params::ParamStore;

const INIT_STD: f64 = 0.02;
const LN_EPS: f32 = 1e-5;

fn linear(p: &mut ParamStore, name: &str, input: usize, output: usize) -> Result<Linear> {
    let w = p.normal(&format!("{name}.weight"), &[output, input], INIT_STD)?;
    let b = p.zeros(&format!("{name}.bias"), &[output])?;
    Ok(Linear::new(w, Some(b)))
}

struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl LayerNorm {
    fn new(p: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: p.ones(&format!("{name}.weight"), &[dim])?,
            beta: p.zeros(&format!("{name}.bias"), &[dim])?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::layer_norm_slow(x, &self.gamma, &self.beta, LN_EPS)?)
    }
}

struct Block {
    ln1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    heads: usize,
}

impl Block {
    fn new(p: &mut ParamStore, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        let h = cfg.hidden;
        Ok(Block {
            ln1: LayerNorm::new(p, &format!("{name}.ln1"), h)?,
            qkv: linear(p, &format!("{name}.attn.qkv"), h, 3 * h)?,
            proj: linear(p, &format!("{name}.attn.proj"), h, h)?,
            ln2: LayerNorm::new(p, &format!("{name}.ln2"), h)?,
            ff1: linear(p, &format!("{name}.ff1"), h, cfg.ffn)?,
            ff2: linear(p, &format!("{name}.ff2"), cfg.ffn, h)?,
            heads: cfg.heads,
        })
    }

    /// `bias` is [B, 1, 1, L] with large negatives at padding.
    fn forward(&self, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (b, l, h) = x.dims3()?;
        let hd = h / self.heads;
        let qkv = self.qkv.forward(&self.ln1.forward(x)?)?;
        let split = |i: usize| -> Result<Tensor> {
            Ok(qkv
                .narrow(2, i * h, h)?
                .reshape((b, l, self.heads, hd))?
                .transpose(1, 2)?
                .contiguous()?)
        };
        let (q, k, v) = (split(0)?, split(1)?, split(2)?);
        let scores = (q.matmul(&k.t()?)? * (1.0 / (hd as f64).sqrt()))?.broadcast_add(bias)?;
        let attn = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let ctx = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, l, h))?;
        let x = (x + self.proj.forward(&ctx)?)?;
        let ff = self.ff2.forward(&self.ff1.forward(&self.ln2.forward(&x)?)?.gelu_erf()?)?;
        Ok((x + ff)?)
    }
}

/// Pre-norm transformer encoder over hashed word ids.
pub struct TinyEncoder {
    tokens: Embedding,
    positions: Tensor,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    cfg: EncoderConfig,
}

impl TinyEncoder {
    pub fn new(p: &mut ParamStore, cfg: &EncoderConfig) -> Result<Self> {
        let vocab = HashTokenizer::new(ficle_core::encoding::TokenizerConfig { buckets: cfg.buckets }).vocab_size();
        let emb = p.normal("encoder.tokens", &[vocab, cfg.hidden], INIT_STD)?;
        let positions = p.normal("encoder.positions", &[cfg.max_positions, cfg.hidden], INIT_STD)?;
        let blocks = (0..cfg.layers)
            .map(|i| Block::new(p, &format!("encoder.layers.{i}"), cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(TinyEncoder {
            tokens: Embedding::new(emb, cfg.hidden),
            positions,
            blocks,
            ln_f: LayerNorm::new(p, "encoder.ln_f", cfg.hidden)?,
            cfg: *cfg,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Hidden states [B, L, H].
    pub fn forward(&self, batch: &Batch) -> Result<Tensor> {
        let (_, l) = batch.ids.dims2()?;
        if l > self.cfg.max_positions {
            return Err(ModelError::Other(format!(
                "sequence of {l} tokens exceeds {} positions",
                self.cfg.max_positions
            )));
        }
        let x = self.tokens.forward(&batch.ids)?;
        let mut x = x.broadcast_add(&self.positions.narrow(0, 0, l)?)?;
        let bias = ((batch.mask.ones_like()? - &batch.mask)? * -1e4)?.unsqueeze(1)?.unsqueeze(1)?;
        for blk in &self.blocks {
            x = blk.forward(&x, &bias)?;
        }
        self.ln_f.forward(&x)
    }
}

/// Padded batch of encoded inputs.
pub struct Batch {
    pub ids: Tensor,
    /// 1.0 at real tokens, 0.0 at padding; [B, L].
    pub mask: Tensor,
    pub lens: Vec<usize>,
    pub width: usize,
}

impl Batch {
    pub fn new(inputs: &[&EncodedInput], device: &Device) -> Result<Self> {
        if inputs.is_empty() {
            return Err(ModelError::Other("empty batch".into()));
        }
        let width = inputs.iter().map(|x| x.len()).max().unwrap_or(1);
        let mut ids = Vec::with_capacity(inputs.len() * width);
        let mut mask = Vec::with_capacity(inputs.len() * width);
        for x in inputs {
            ids.extend(x.ids.iter().copied());
            ids.extend(std::iter::repeat_n(HashTokenizer::PAD, width - x.len()));
            mask.extend(std::iter::repeat_n(1f32, x.len()));
            mask.extend(std::iter::repeat_n(0f32, width - x.len()));
        }
        let b = inputs.len();
        Ok(Batch {
            ids: Tensor::from_vec(ids, (b, width), device)?,
            mask: Tensor::from_vec(mask, (b, width), device)?,
            lens: inputs.iter().map(|x| x.len()).collect(),
            width,
        })
    }

    pub fn size(&self) -> usize {
        self.lens.len()
    }
}

/// Head layout of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub encoder: EncoderConfig,
    /// Number of span fields; the span head emits start and end scores for
    /// each, interleaved as [start_0, end_0, start_1, ...].
    pub span_fields: usize,
    /// Output sizes of the classification heads.
    pub class_heads: Vec<usize>,
}

pub struct NetworkOutput {
    pub hidden: Tensor,
    /// Hidden state at the summary token, [B, H].
    pub summary: Tensor,
    /// [B, L, 2F] when the network has span fields.
    pub span_logits: Option<Tensor>,
    /// One [B, C] tensor per classification head.
    pub class_logits: Vec<Tensor>,
}

pub struct Network {
    spec: NetworkSpec,
    encoder: TinyEncoder,
    span_head: Option<Linear>,
    class_heads: Vec<Linear>,
}

impl Network {
    pub fn new(p: &mut ParamStore, spec: NetworkSpec) -> Result<Self> {
        let encoder = TinyEncoder::new(p, &spec.encoder)?;
        let h = spec.encoder.hidden;
        let span_head = (spec.span_fields > 0)
            .then(|| linear(p, "span_head", h, 2 * spec.span_fields))
            .transpose()?;
        let class_heads = spec
            .class_heads
            .iter()
            .enumerate()
            .map(|(i, &n)| linear(p, &format!("class_head.{i}"), h, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            spec,
            encoder,
            span_head,
            class_heads,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn forward(&self, batch: &Batch) -> Result<NetworkOutput> {
        let hidden = self.encoder.forward(batch)?;
        let summary = hidden.narrow(1, 0, 1)?.squeeze(1)?;
        let span_logits = self.span_head.as_ref().map(|h| h.forward(&hidden)).transpose()?;
        let class_logits = self
            .class_heads
            .iter()
            .map(|h| h.forward(&summary))
            .collect::<candle_core::Result<Vec<_>>>()?;
        Ok(NetworkOutput {
            hidden,
            summary,
            span_logits,
            class_logits,
        })
    }
}

/// Start and end scores of span field `f`, each [B, L].
pub fn field_logits(span_logits: &Tensor, f: usize) -> Result<(Tensor, Tensor)> {
    let s = span_logits.narrow(2, 2 * f, 1)?.squeeze(2)?;
    let e = span_logits.narrow(2, 2 * f + 1, 1)?.squeeze(2)?;
    Ok((s, e))
}

/// L2-normalizes rows of a [N, H] tensor.
pub fn normalize_rows(x: &Tensor) -> Result<Tensor> {
    let norm = x.sqr()?.sum_keepdim(1)?.sqrt()?.clamp(1e-12, f64::MAX)?;
    Ok(x.broadcast_div(&norm)?)
}

pub fn to_f32_rows(t: &Tensor) -> Result<Vec<Vec<f32>>> {
    Ok(t.to_dtype(DType::F32)?.to_vec2::<f32>()?)
}
