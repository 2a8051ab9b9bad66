//! A small pre-LN transformer encoder with hand-written backpropagation.
//!
//! All parameters live in one flat `Vec<f64>` described by a [`Layout`], so
//! the optimizer, the checkpoint format and gradient checks all work on
//! plain slices. The masked-LM head ties its output projection to the token
//! embedding; the classification head is a linear layer on the `[CLS]`
//! position followed by one softmax per output group.

use std::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{
    add_assign, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, softmax,
    LnCache,
};
use super::vocab::{TokenId, TokenVocab, Vocabulary, CLS_ID, MASK_ID};
use super::{MaskDistribution, MaskScorer};
use crate::error::{Error, Result};
use crate::prompt::WrappedText;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            max_seq_len: 256,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_ff == 0 || self.max_seq_len < 2 {
            return Err(Error::Config("d_ff must be > 0 and max_seq_len >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::out_of_range("dropout", self.dropout, "[0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// Tied projection onto the vocabulary at the mask position.
    Mlm,
    /// `groups` independent softmaxes over `classes` each, read from `[CLS]`.
    Cls { groups: usize, classes: usize },
}

#[derive(Debug, Clone)]
struct LayerLayout {
    ln1_g: Range<usize>,
    ln1_b: Range<usize>,
    wq: Range<usize>,
    bq: Range<usize>,
    wk: Range<usize>,
    bk: Range<usize>,
    wv: Range<usize>,
    bv: Range<usize>,
    wo: Range<usize>,
    bo: Range<usize>,
    ln2_g: Range<usize>,
    ln2_b: Range<usize>,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Layout {
    tok_emb: Range<usize>,
    pos_emb: Range<usize>,
    layers: Vec<LayerLayout>,
    lnf_g: Range<usize>,
    lnf_b: Range<usize>,
    head_w: Option<Range<usize>>,
    head_b: Range<usize>,
    total: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig, vocab: usize, head: Head) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let d = cfg.d_model;
        let tok_emb = take(vocab * d);
        let pos_emb = take(cfg.max_seq_len * d);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerLayout {
                ln1_g: take(d),
                ln1_b: take(d),
                wq: take(d * d),
                bq: take(d),
                wk: take(d * d),
                bk: take(d),
                wv: take(d * d),
                bv: take(d),
                wo: take(d * d),
                bo: take(d),
                ln2_g: take(d),
                ln2_b: take(d),
                w1: take(d * cfg.d_ff),
                b1: take(cfg.d_ff),
                w2: take(cfg.d_ff * d),
                b2: take(d),
            })
            .collect();
        let lnf_g = take(d);
        let lnf_b = take(d);
        let (head_w, head_b) = match head {
            Head::Mlm => (None, take(vocab)),
            Head::Cls { groups, classes } => (Some(take(d * groups * classes)), take(groups * classes)),
        };
        Layout {
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
            total: at,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Token ids plus the position whose encoding feeds the head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<TokenId>,
    pub head_pos: usize,
}

struct LayerCache {
    ln1: LnCache,
    xn1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    att: Vec<f64>,
    ctx: Vec<f64>,
    drop1: Option<Vec<f64>>,
    ln2: LnCache,
    xn2: Vec<f64>,
    f1: Vec<f64>,
    act: Vec<f64>,
    drop2: Option<Vec<f64>>,
}

/// Activations saved by [`TinyModel::forward`] for [`TinyModel::backward`].
pub struct ForwardCache {
    ids: Vec<TokenId>,
    head_pos: usize,
    drop0: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    hf: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TinyModel {
    config: ModelConfig,
    head: Head,
    vocab: Vocabulary,
    layout: Layout,
    params: Vec<f64>,
}

fn dropout_mask(rng: &mut ChaCha8Rng, n: usize, rate: f64) -> Vec<f64> {
    let scale = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
        .collect()
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (v, s) in x.iter_mut().zip(m) {
            *v *= s;
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl TinyModel {
    /// Masked-LM scorer.
    pub fn new_mlm(vocab: Vocabulary, config: ModelConfig, seed: u64) -> Result<Self> {
        Self::new(vocab, config, Head::Mlm, seed)
    }

    /// CLS-head classifier with `groups` softmaxes of `classes` each.
    pub fn new_cls(vocab: Vocabulary, config: ModelConfig, groups: usize, classes: usize, seed: u64) -> Result<Self> {
        if groups == 0 || classes < 2 {
            return Err(Error::Config("CLS head needs >= 1 group of >= 2 classes".into()));
        }
        Self::new(vocab, config, Head::Cls { groups, classes }, seed)
    }

    pub fn new(vocab: Vocabulary, config: ModelConfig, head: Head, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config, vocab.len(), head);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let mut fill = |params: &mut [f64], std: f64| {
            for p in params {
                *p = std * gaussian(&mut rng);
            }
        };
        fill(&mut params[layout.tok_emb.clone()], 0.1);
        fill(&mut params[layout.pos_emb.clone()], 0.1);
        for l in &layout.layers {
            for w in [&l.wq, &l.wk, &l.wv, &l.wo, &l.w1] {
                fill(&mut params[w.clone()], 1.0 / (d as f64).sqrt());
            }
            fill(&mut params[l.w2.clone()], 1.0 / (config.d_ff as f64).sqrt());
            params[l.ln1_g.clone()].fill(1.0);
            params[l.ln2_g.clone()].fill(1.0);
        }
        params[layout.lnf_g.clone()].fill(1.0);
        if let Some(w) = &layout.head_w {
            fill(&mut params[w.clone()], 1.0 / (d as f64).sqrt());
        }
        Ok(TinyModel {
            config,
            head,
            vocab,
            layout,
            params,
        })
    }

    pub(crate) fn from_parts(vocab: Vocabulary, config: ModelConfig, head: Head, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config, vocab.len(), head);
        if params.len() != layout.total {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(TinyModel {
            config,
            head,
            vocab,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn dropout_rate(&self) -> f64 {
        self.config.dropout
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::out_of_range("dropout", rate, "[0, 1)"));
        }
        self.config.dropout = rate;
        Ok(())
    }

    pub fn output_size(&self) -> usize {
        match self.head {
            Head::Mlm => self.vocab.len(),
            Head::Cls { groups, classes } => groups * classes,
        }
    }

    /// Zeroes the final projection so every output is uniform.
    pub fn zero_output_layer(&mut self) {
        match &self.layout.head_w {
            Some(w) => self.params[w.clone()].fill(0.0),
            None => self.params[self.layout.lnf_g.clone()].fill(0.0),
        }
        self.params[self.layout.lnf_b.clone()].fill(0.0);
        self.params[self.layout.head_b.clone()].fill(0.0);
    }

    /// `[CLS] prefix paragraph suffix`; only the paragraph is truncated.
    pub fn encode_wrapped(&self, input: &WrappedText) -> Result<Encoded> {
        let (prefix, paragraph, suffix) = input.segments();
        let pre = self.vocab.encode(&prefix);
        let mut par = self.vocab.encode(&paragraph);
        let suf = self.vocab.encode(&suffix);
        let fixed = 1 + pre.len() + suf.len();
        if fixed > self.config.max_seq_len {
            return Err(Error::Data(format!(
                "prompt without paragraph is {fixed} tokens, max sequence length is {}",
                self.config.max_seq_len
            )));
        }
        par.truncate(self.config.max_seq_len - fixed);
        let mut ids = Vec::with_capacity(fixed + par.len());
        ids.push(CLS_ID);
        ids.extend(pre);
        ids.extend(par);
        ids.extend(suf);
        let mut masks = ids.iter().enumerate().filter(|(_, &t)| t == MASK_ID).map(|(i, _)| i);
        let head_pos = masks.next();
        assert!(
            head_pos.is_some() && masks.next().is_none(),
            "wrapped text must tokenize to exactly one mask token"
        );
        Ok(Encoded {
            ids,
            head_pos: head_pos.unwrap_or(0),
        })
    }

    /// `[CLS] paragraph`, truncated to the maximum length.
    pub fn encode_plain(&self, text: &str) -> Result<Encoded> {
        if text.trim().is_empty() {
            return Err(Error::Data("empty text".into()));
        }
        let mut ids = vec![CLS_ID];
        ids.extend(self.vocab.encode(text));
        ids.truncate(self.config.max_seq_len);
        Ok(Encoded { ids, head_pos: 0 })
    }

    /// Raw head logits. Dropout is active only when `rng` is given.
    pub fn forward(&self, input: &Encoded, mut rng: Option<&mut ChaCha8Rng>) -> (Vec<f64>, ForwardCache) {
        let cfg = &self.config;
        let p = &self.params;
        let lay = &self.layout;
        let d = cfg.d_model;
        let t_len = input.ids.len();
        let rate = cfg.dropout;
        let mut draw = |n: usize| match rng.as_deref_mut() {
            Some(r) if rate > 0.0 => Some(dropout_mask(r, n, rate)),
            _ => None,
        };

        let tok = &p[lay.tok_emb.clone()];
        let pos = &p[lay.pos_emb.clone()];
        let mut x = vec![0.0; t_len * d];
        for (t, &id) in input.ids.iter().enumerate() {
            for j in 0..d {
                x[t * d + j] = tok[id * d + j] + pos[t * d + j];
            }
        }
        let drop0 = draw(t_len * d);
        apply_mask(&mut x, &drop0);

        let h = cfg.n_heads;
        let dh = d / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in &lay.layers {
            let (xn1, ln1) = layer_norm(&x, t_len, d, &p[l.ln1_g.clone()], &p[l.ln1_b.clone()]);
            let q = linear(&xn1, t_len, &p[l.wq.clone()], d, d, &p[l.bq.clone()]);
            let k = linear(&xn1, t_len, &p[l.wk.clone()], d, d, &p[l.bk.clone()]);
            let v = linear(&xn1, t_len, &p[l.wv.clone()], d, d, &p[l.bv.clone()]);
            let mut att = vec![0.0; h * t_len * t_len];
            let mut ctx = vec![0.0; t_len * d];
            for hh in 0..h {
                let off = hh * dh;
                for i in 0..t_len {
                    let row = &mut att[(hh * t_len + i) * t_len..(hh * t_len + i + 1) * t_len];
                    let qi = &q[i * d + off..i * d + off + dh];
                    for (j, s) in row.iter_mut().enumerate() {
                        let kj = &k[j * d + off..j * d + off + dh];
                        *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    }
                    let probs = softmax(row);
                    row.copy_from_slice(&probs);
                    let ci = &mut ctx[i * d + off..i * d + off + dh];
                    for (j, &a) in probs.iter().enumerate() {
                        let vj = &v[j * d + off..j * d + off + dh];
                        for c in 0..dh {
                            ci[c] += a * vj[c];
                        }
                    }
                }
            }
            let mut attn_out = linear(&ctx, t_len, &p[l.wo.clone()], d, d, &p[l.bo.clone()]);
            let drop1 = draw(t_len * d);
            apply_mask(&mut attn_out, &drop1);
            add_assign(&mut x, &attn_out);

            let (xn2, ln2) = layer_norm(&x, t_len, d, &p[l.ln2_g.clone()], &p[l.ln2_b.clone()]);
            let f1 = linear(&xn2, t_len, &p[l.w1.clone()], d, cfg.d_ff, &p[l.b1.clone()]);
            let act: Vec<f64> = f1.iter().map(|&z| gelu(z)).collect();
            let mut ffn_out = linear(&act, t_len, &p[l.w2.clone()], cfg.d_ff, d, &p[l.b2.clone()]);
            let drop2 = draw(t_len * d);
            apply_mask(&mut ffn_out, &drop2);
            add_assign(&mut x, &ffn_out);

            layers.push(LayerCache {
                ln1,
                xn1,
                q,
                k,
                v,
                att,
                ctx,
                drop1,
                ln2,
                xn2,
                f1,
                act,
                drop2,
            });
        }

        let hp = input.head_pos;
        let (hf, lnf) = layer_norm(
            &x[hp * d..(hp + 1) * d],
            1,
            d,
            &p[lay.lnf_g.clone()],
            &p[lay.lnf_b.clone()],
        );
        let logits = match (&self.head, &lay.head_w) {
            (Head::Mlm, _) => linear_tied(&hf, tok, self.vocab.len(), d, &p[lay.head_b.clone()]),
            (Head::Cls { groups, classes }, Some(w)) => {
                linear(&hf, 1, &p[w.clone()], d, groups * classes, &p[lay.head_b.clone()])
            }
            (Head::Cls { .. }, None) => unreachable!("CLS layout always has a weight matrix"),
        };
        let cache = ForwardCache {
            ids: input.ids.clone(),
            head_pos: hp,
            drop0,
            layers,
            lnf,
            hf,
        };
        (logits, cache)
    }

    /// Accumulates parameter gradients of a scalar loss into `grads`, given
    /// the loss gradient with respect to the head logits.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64], grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len());
        assert_eq!(dlogits.len(), self.output_size());
        let cfg = &self.config;
        let p = &self.params;
        let lay = &self.layout;
        let d = cfg.d_model;
        let t_len = cache.ids.len();

        let mut dhf = vec![0.0; d];
        match &lay.head_w {
            None => {
                let tok = &p[lay.tok_emb.clone()];
                for (v, &g) in dlogits.iter().enumerate() {
                    grads[lay.head_b.start + v] += g;
                    if g == 0.0 {
                        continue;
                    }
                    let base = lay.tok_emb.start + v * d;
                    for j in 0..d {
                        grads[base + j] += g * cache.hf[j];
                        dhf[j] += g * tok[v * d + j];
                    }
                }
            }
            Some(w) => {
                let n_out = dlogits.len();
                let (gw, gb) = split_two(grads, w.clone(), lay.head_b.clone());
                dhf = linear_backward(&cache.hf, 1, &p[w.clone()], d, n_out, dlogits, gw, gb);
            }
        }
        let mut dx = vec![0.0; t_len * d];
        {
            let (gg, gb) = split_two(grads, lay.lnf_g.clone(), lay.lnf_b.clone());
            let dxh = layer_norm_backward(&cache.lnf, 1, d, &p[lay.lnf_g.clone()], &dhf, gg, gb);
            dx[cache.head_pos * d..(cache.head_pos + 1) * d].copy_from_slice(&dxh);
        }

        let h = cfg.n_heads;
        let dh = d / h;
        let scale = 1.0 / (dh as f64).sqrt();
        for (l, c) in lay.layers.iter().zip(&cache.layers).rev() {
            // Feed-forward branch.
            let mut dffn = dx.clone();
            apply_mask(&mut dffn, &c.drop2);
            let dact = {
                let (gw, gb) = split_two(grads, l.w2.clone(), l.b2.clone());
                linear_backward(&c.act, t_len, &p[l.w2.clone()], cfg.d_ff, d, &dffn, gw, gb)
            };
            let df1: Vec<f64> = dact.iter().zip(&c.f1).map(|(g, &z)| g * gelu_grad(z)).collect();
            let dxn2 = {
                let (gw, gb) = split_two(grads, l.w1.clone(), l.b1.clone());
                linear_backward(&c.xn2, t_len, &p[l.w1.clone()], d, cfg.d_ff, &df1, gw, gb)
            };
            let dres = {
                let (gg, gb) = split_two(grads, l.ln2_g.clone(), l.ln2_b.clone());
                layer_norm_backward(&c.ln2, t_len, d, &p[l.ln2_g.clone()], &dxn2, gg, gb)
            };
            add_assign(&mut dx, &dres);

            // Attention branch.
            let mut dattn = dx.clone();
            apply_mask(&mut dattn, &c.drop1);
            let dctx = {
                let (gw, gb) = split_two(grads, l.wo.clone(), l.bo.clone());
                linear_backward(&c.ctx, t_len, &p[l.wo.clone()], d, d, &dattn, gw, gb)
            };
            let mut dq = vec![0.0; t_len * d];
            let mut dk = vec![0.0; t_len * d];
            let mut dv = vec![0.0; t_len * d];
            let mut da = vec![0.0; t_len];
            for hh in 0..h {
                let off = hh * dh;
                for i in 0..t_len {
                    let a = &c.att[(hh * t_len + i) * t_len..(hh * t_len + i + 1) * t_len];
                    let dci = &dctx[i * d + off..i * d + off + dh];
                    for j in 0..t_len {
                        let vj = &c.v[j * d + off..j * d + off + dh];
                        da[j] = dci.iter().zip(vj).map(|(x, y)| x * y).sum();
                        let dvj = &mut dv[j * d + off..j * d + off + dh];
                        for cc in 0..dh {
                            dvj[cc] += a[j] * dci[cc];
                        }
                    }
                    let dot: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
                    for j in 0..t_len {
                        let ds = a[j] * (da[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for cc in 0..dh {
                            dq[i * d + off + cc] += ds * c.k[j * d + off + cc];
                            dk[j * d + off + cc] += ds * c.q[i * d + off + cc];
                        }
                    }
                }
            }
            let mut dxn1 = vec![0.0; t_len * d];
            for (w, b, dy) in [(&l.wq, &l.bq, &dq), (&l.wk, &l.bk, &dk), (&l.wv, &l.bv, &dv)] {
                let (gw, gb) = split_two(grads, w.clone(), b.clone());
                let part = linear_backward(&c.xn1, t_len, &p[w.clone()], d, d, dy, gw, gb);
                add_assign(&mut dxn1, &part);
            }
            let dres = {
                let (gg, gb) = split_two(grads, l.ln1_g.clone(), l.ln1_b.clone());
                layer_norm_backward(&c.ln1, t_len, d, &p[l.ln1_g.clone()], &dxn1, gg, gb)
            };
            add_assign(&mut dx, &dres);
        }

        apply_mask(&mut dx, &cache.drop0);
        for (t, &id) in cache.ids.iter().enumerate() {
            let te = lay.tok_emb.start + id * d;
            let pe = lay.pos_emb.start + t * d;
            for j in 0..d {
                grads[te + j] += dx[t * d + j];
                grads[pe + j] += dx[t * d + j];
            }
        }
    }

    /// Per-group class distributions from the CLS head.
    pub fn cls_forward(&self, text: &str) -> Result<Vec<Vec<f64>>> {
        let Head::Cls { classes, .. } = self.head else {
            return Err(Error::Config("cls_forward requires a CLS-head model".into()));
        };
        let enc = self.encode_plain(text)?;
        let (logits, _) = self.forward(&enc, None);
        Ok(logits.chunks(classes).map(softmax).collect())
    }

    /// Mask distribution with dropout sampled from `rng`.
    pub fn score_mask_train(&self, input: &WrappedText, rng: &mut ChaCha8Rng) -> Result<MaskDistribution> {
        self.require_mlm()?;
        let enc = self.encode_wrapped(input)?;
        let (logits, _) = self.forward(&enc, Some(rng));
        Ok(MaskDistribution::from_logits(&logits))
    }

    fn require_mlm(&self) -> Result<()> {
        match self.head {
            Head::Mlm => Ok(()),
            Head::Cls { .. } => Err(Error::Config("mask scoring requires an MLM-head model".into())),
        }
    }
}

fn linear_tied(h: &[f64], emb: &[f64], vocab: usize, d: usize, bias: &[f64]) -> Vec<f64> {
    (0..vocab)
        .map(|v| bias[v] + h.iter().zip(&emb[v * d..(v + 1) * d]).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Two disjoint mutable sub-slices; `a` must precede `b`.
fn split_two(buf: &mut [f64], a: Range<usize>, b: Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = buf.split_at_mut(b.start);
    (&mut left[a], &mut right[..b.end - b.start])
}

impl MaskScorer for TinyModel {
    fn vocab(&self) -> &dyn TokenVocab {
        &self.vocab
    }

    fn score_mask(&self, input: &WrappedText) -> Result<MaskDistribution> {
        self.require_mlm()?;
        let enc = self.encode_wrapped(input)?;
        let (logits, _) = self.forward(&enc, None);
        Ok(MaskDistribution::from_logits(&logits))
    }
}
