//! Parameter layout and the encoder-decoder forward pass.

use rand::Rng;

use super::attention::{multi_head, positional_encoding, AttentionIds};
use super::config::{TransformerConfig, LAYER_NORM_EPSILON};
use crate::error::{Error, Result};
use crate::nn::{Graph, Padding, ParamId, ParamStore, Tensor2, Var};

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormIds {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvIds {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncoderLayer {
    pub attn: AttentionIds,
    pub norm_attn: NormIds,
    pub conv: ConvIds,
    pub norm_conv: NormIds,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecoderLayer {
    pub self_attn: AttentionIds,
    pub norm_self: NormIds,
    pub cross_attn: AttentionIds,
    pub norm_cross: NormIds,
    pub conv: ConvIds,
    pub norm_conv: NormIds,
}

/// Where every tensor of the model lives in its [`ParamStore`].
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub enc_embed_w: ParamId,
    pub enc_embed_b: ParamId,
    pub dec_embed_w: ParamId,
    pub dec_embed_b: ParamId,
    pub dec_start: ParamId,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<DecoderLayer>,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// Name and shape of every tensor, in insertion order.
fn tensor_specs(c: &TransformerConfig) -> Vec<(String, usize, usize)> {
    let d = c.d_model;
    let kw = c.conv_kernel_width * d;
    let mut specs = vec![
        ("embed.enc.w".to_string(), 1, d),
        ("embed.enc.b".to_string(), 1, d),
        ("embed.dec.w".to_string(), 1, d),
        ("embed.dec.b".to_string(), 1, d),
        ("dec.start".to_string(), 1, d),
    ];
    let attn = |prefix: &str, specs: &mut Vec<(String, usize, usize)>| {
        for p in ["q", "k", "v", "o"] {
            specs.push((format!("{prefix}.{p}"), d, d));
        }
    };
    let norm = |prefix: &str, specs: &mut Vec<(String, usize, usize)>| {
        specs.push((format!("{prefix}.gamma"), 1, d));
        specs.push((format!("{prefix}.beta"), 1, d));
    };
    let conv = |prefix: &str, specs: &mut Vec<(String, usize, usize)>| {
        specs.push((format!("{prefix}.w"), kw, d));
        specs.push((format!("{prefix}.b"), 1, d));
    };
    for l in 0..c.encoder_layers {
        attn(&format!("enc.{l}.attn"), &mut specs);
        norm(&format!("enc.{l}.ln_attn"), &mut specs);
        conv(&format!("enc.{l}.conv"), &mut specs);
        norm(&format!("enc.{l}.ln_conv"), &mut specs);
    }
    for l in 0..c.decoder_layers {
        attn(&format!("dec.{l}.self"), &mut specs);
        norm(&format!("dec.{l}.ln_self"), &mut specs);
        attn(&format!("dec.{l}.cross"), &mut specs);
        norm(&format!("dec.{l}.ln_cross"), &mut specs);
        conv(&format!("dec.{l}.conv"), &mut specs);
        norm(&format!("dec.{l}.ln_conv"), &mut specs);
    }
    specs.push(("head.w".to_string(), d, 1));
    specs.push(("head.b".to_string(), 1, 1));
    specs
}

/// Fresh parameters: Glorot weights, zero biases, unit norm gains.
pub(crate) fn init_params<R: Rng + ?Sized>(c: &TransformerConfig, rng: &mut R) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for (name, rows, cols) in tensor_specs(c) {
        let value = if name.ends_with(".gamma") {
            Tensor2::filled(rows, cols, 1.0)
        } else if name.ends_with(".beta") || name.ends_with(".b") {
            Tensor2::zeros(rows, cols)
        } else if name == "dec.start" {
            Tensor2::glorot(rows, cols, cols, cols, rng)
        } else {
            Tensor2::glorot(rows, cols, rows, cols, rng)
        };
        store.insert(name, value)?;
    }
    Ok(store)
}

impl Layout {
    /// Resolves every tensor by name and checks its shape against `c`.
    pub fn resolve(store: &ParamStore, c: &TransformerConfig) -> Result<Self> {
        let specs = tensor_specs(c);
        if store.len() != specs.len() {
            return Err(Error::Artifact(format!(
                "expected {} tensors for this config, found {}",
                specs.len(),
                store.len()
            )));
        }
        for (name, rows, cols) in &specs {
            let id = store.expect_id(name)?;
            let shape = store.value(id).shape();
            if shape != (*rows, *cols) {
                return Err(Error::Artifact(format!(
                    "tensor `{name}` is {}x{}, config requires {rows}x{cols}",
                    shape.0, shape.1
                )));
            }
        }
        let id = |n: String| store.expect_id(&n);
        let attn = |p: String| -> Result<AttentionIds> {
            Ok(AttentionIds {
                q: store.expect_id(&format!("{p}.q"))?,
                k: store.expect_id(&format!("{p}.k"))?,
                v: store.expect_id(&format!("{p}.v"))?,
                o: store.expect_id(&format!("{p}.o"))?,
            })
        };
        let norm = |p: String| -> Result<NormIds> {
            Ok(NormIds {
                gamma: store.expect_id(&format!("{p}.gamma"))?,
                beta: store.expect_id(&format!("{p}.beta"))?,
            })
        };
        let conv = |p: String| -> Result<ConvIds> {
            Ok(ConvIds {
                weight: store.expect_id(&format!("{p}.w"))?,
                bias: store.expect_id(&format!("{p}.b"))?,
            })
        };
        let encoder = (0..c.encoder_layers)
            .map(|l| {
                Ok(EncoderLayer {
                    attn: attn(format!("enc.{l}.attn"))?,
                    norm_attn: norm(format!("enc.{l}.ln_attn"))?,
                    conv: conv(format!("enc.{l}.conv"))?,
                    norm_conv: norm(format!("enc.{l}.ln_conv"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let decoder = (0..c.decoder_layers)
            .map(|l| {
                Ok(DecoderLayer {
                    self_attn: attn(format!("dec.{l}.self"))?,
                    norm_self: norm(format!("dec.{l}.ln_self"))?,
                    cross_attn: attn(format!("dec.{l}.cross"))?,
                    norm_cross: norm(format!("dec.{l}.ln_cross"))?,
                    conv: conv(format!("dec.{l}.conv"))?,
                    norm_conv: norm(format!("dec.{l}.ln_conv"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            enc_embed_w: id("embed.enc.w".into())?,
            enc_embed_b: id("embed.enc.b".into())?,
            dec_embed_w: id("embed.dec.w".into())?,
            dec_embed_b: id("embed.dec.b".into())?,
            dec_start: id("dec.start".into())?,
            encoder,
            decoder,
            head_w: id("head.w".into())?,
            head_b: id("head.b".into())?,
        })
    }
}

/// Builds the forward pass of one model on a tape.
pub(crate) struct ForwardBuilder<'a> {
    pub config: &'a TransformerConfig,
    pub store: &'a ParamStore,
    pub layout: &'a Layout,
    /// Collects every attention weight matrix when set.
    pub maps: Option<Vec<Var>>,
}

impl<'a> ForwardBuilder<'a> {
    fn embed(&self, g: &mut Graph, values: &[f64], w: ParamId, b: ParamId) -> Result<Var> {
        let col = g.constant(Tensor2::column(values)?);
        let (w, b) = (g.param(self.store, w), g.param(self.store, b));
        let x = g.matmul(col, w)?;
        g.add_row(x, b)
    }

    fn add_position(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let rows = g.value(x).rows();
        let pe = g.constant(positional_encoding(rows, self.config.d_model)?);
        g.add(x, pe)
    }

    fn norm(&self, g: &mut Graph, x: Var, ids: NormIds) -> Result<Var> {
        let gamma = g.param(self.store, ids.gamma);
        let beta = g.param(self.store, ids.beta);
        g.layer_norm(x, gamma, beta, LAYER_NORM_EPSILON)
    }

    /// `LN(x + sublayer(x))`
    fn post_norm(&self, g: &mut Graph, x: Var, sub: Var, ids: NormIds) -> Result<Var> {
        let sum = g.add(x, sub)?;
        self.norm(g, sum, ids)
    }

    fn conv_pool(&self, g: &mut Graph, x: Var, ids: ConvIds, padding: Padding) -> Result<Var> {
        let cols = g.im2col(x, self.config.conv_kernel_width, padding)?;
        let w = g.param(self.store, ids.weight);
        let b = g.param(self.store, ids.bias);
        let z = g.matmul(cols, w)?;
        let z = g.add_row(z, b)?;
        let z = g.relu(z);
        g.max_pool(z, self.config.pool_range, padding)
    }

    fn attention(&mut self, g: &mut Graph, ids: &AttentionIds, q: Var, kv: Var, causal: bool) -> Result<Var> {
        multi_head(
            g,
            self.store,
            ids,
            q,
            kv,
            self.config.head_count,
            causal,
            self.maps.as_mut(),
        )
    }

    /// Encoder memory for a normalised context window.
    pub fn encode(&mut self, g: &mut Graph, context: &[f64]) -> Result<Var> {
        if context.len() != self.config.context_length {
            return Err(Error::Shape(format!(
                "context has {} values, model expects {}",
                context.len(),
                self.config.context_length
            )));
        }
        let x = self.embed(g, context, self.layout.enc_embed_w, self.layout.enc_embed_b)?;
        let mut h = self.add_position(g, x)?;
        for layer in self.layout.encoder.clone() {
            let a = self.attention(g, &layer.attn, h, h, false)?;
            h = self.post_norm(g, h, a, layer.norm_attn)?;
            let c = self.conv_pool(g, h, layer.conv, Padding::Centered)?;
            h = self.post_norm(g, h, c, layer.norm_conv)?;
        }
        Ok(h)
    }

    /// One prediction per decoder position: the start token followed by
    /// `previous` (the shifted-right targets). Returns a column of length
    /// `previous.len() + 1`.
    pub fn decode(&mut self, g: &mut Graph, memory: Var, previous: &[f64]) -> Result<Var> {
        let start = g.param(self.store, self.layout.dec_start);
        let tokens = if previous.is_empty() {
            start
        } else {
            let rest = self.embed(g, previous, self.layout.dec_embed_w, self.layout.dec_embed_b)?;
            g.concat_rows(&[start, rest])?
        };
        let mut y = self.add_position(g, tokens)?;
        for layer in self.layout.decoder.clone() {
            let s = self.attention(g, &layer.self_attn, y, y, true)?;
            y = self.post_norm(g, y, s, layer.norm_self)?;
            let x = self.attention(g, &layer.cross_attn, y, memory, false)?;
            y = self.post_norm(g, y, x, layer.norm_cross)?;
            let c = self.conv_pool(g, y, layer.conv, Padding::Causal)?;
            y = self.post_norm(g, y, c, layer.norm_conv)?;
        }
        let w = g.param(self.store, self.layout.head_w);
        let b = g.param(self.store, self.layout.head_b);
        let out = g.matmul(y, w)?;
        g.add_row(out, b)
    }
}
