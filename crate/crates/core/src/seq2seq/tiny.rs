//! A small CPU encoder-decoder with hand-written backpropagation.
//!
//! Encoder: token embeddings followed by two residual width-3 convolution
//! layers with tanh. Decoder step: a query built from the embeddings of the
//! last two inputs, scaled dot-product attention over the encoder states,
//! one tanh mixing layer, dropout, and an output projection.

use std::ops::Range;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{log_softmax, pgg_loss_grad, Example, ModelError, Result, Seq2Seq};
use crate::tokenizer::{EOS, PAD};

const LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyConfig {
    pub vocab_size: usize,
    pub width: usize,
    pub dropout: f64,
    pub max_source_tokens: usize,
}

impl TinyConfig {
    pub fn new(vocab_size: usize, width: usize) -> Self {
        Self {
            vocab_size,
            width,
            dropout: 0.1,
            max_source_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    emb: Range<usize>,
    conv_w: [Range<usize>; LAYERS],
    conv_b: [Range<usize>; LAYERS],
    wq: Range<usize>,
    bq: Range<usize>,
    wz: Range<usize>,
    bz: Range<usize>,
    wo: Range<usize>,
    bo: Range<usize>,
    total: usize,
}

impl Layout {
    fn new(v: usize, d: usize) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let emb = take(v * d);
        let conv_w = [take(d * 3 * d), take(d * 3 * d)];
        let conv_b = [take(d), take(d)];
        let wq = take(d * 2 * d);
        let bq = take(d);
        let wz = take(d * 2 * d);
        let bz = take(d);
        let wo = take(v * d);
        let bo = take(v);
        Self {
            emb,
            conv_w,
            conv_b,
            wq,
            bq,
            wz,
            bz,
            wo,
            bo,
            total: at,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinySeq2Seq {
    config: TinyConfig,
    layout: Layout,
    theta: Vec<f64>,
}

/// Encoder output: one state per (truncated) source token.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyEncoded {
    pub states: Vec<Vec<f64>>,
}

/// y = W x + b with W row-major `rows x x.len()`.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| {
            bias + w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, c)| a * c)
                .sum::<f64>()
        })
        .collect()
}

/// dx += Wᵀ dy.
fn affine_back_input(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (r, g) in dy.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        for (dxc, wc) in dx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *dxc += g * wc;
        }
    }
}

/// dW += dy xᵀ.
fn affine_back_weight(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, g) in dy.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        for (dwc, xc) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *dwc += g * xc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

struct EncoderCache {
    tokens: Vec<u32>,
    /// hidden[k] is the input of layer k; hidden[LAYERS] is the output.
    hidden: Vec<Vec<Vec<f64>>>,
    windows: Vec<Vec<Vec<f64>>>,
    acts: Vec<Vec<Vec<f64>>>,
}

struct StepCache {
    y: u32,
    y_prev: u32,
    r: Vec<f64>,
    q: Vec<f64>,
    alpha: Vec<f64>,
    v: Vec<f64>,
    z: Vec<f64>,
    mask: Option<Vec<f64>>,
    zd: Vec<f64>,
    logprobs: Vec<f64>,
}

impl TinySeq2Seq {
    pub fn new(config: TinyConfig, seed: u64) -> Self {
        let (v, d) = (config.vocab_size, config.width);
        let layout = Layout::new(v, d);
        let mut theta = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |r: &Range<usize>, scale: f64| {
            for x in &mut theta[r.clone()] {
                *x = rng.gen_range(-scale..scale);
            }
        };
        fill(&layout.emb, 0.5);
        for k in 0..LAYERS {
            fill(&layout.conv_w[k], 1.0 / ((3 * d) as f64).sqrt());
        }
        fill(&layout.wq, 1.0 / ((2 * d) as f64).sqrt());
        fill(&layout.wz, 1.0 / ((2 * d) as f64).sqrt());
        fill(&layout.wo, 1.0 / (d as f64).sqrt());
        Self { config, layout, theta }
    }

    pub fn config(&self) -> &TinyConfig {
        &self.config
    }

    pub fn set_dropout(&mut self, p: f64) {
        self.config.dropout = p;
    }

    fn p(&self, r: &Range<usize>) -> &[f64] {
        &self.theta[r.clone()]
    }

    /// Start of the embedding row of `id`; out-of-range ids share the last row.
    fn embed_offset(&self, id: u32) -> usize {
        self.layout.emb.start + (id as usize).min(self.config.vocab_size - 1) * self.config.width
    }

    fn embed(&self, id: u32) -> &[f64] {
        let at = self.embed_offset(id);
        &self.theta[at..at + self.config.width]
    }

    fn encode_cached(&self, source: &[u32]) -> EncoderCache {
        let d = self.config.width;
        let mut tokens: Vec<u32> = source.iter().copied().take(self.config.max_source_tokens).collect();
        if tokens.is_empty() {
            tokens.push(EOS);
        }
        let n = tokens.len();
        let mut hidden = vec![tokens.iter().map(|&t| self.embed(t).to_vec()).collect::<Vec<_>>()];
        let mut windows = Vec::with_capacity(LAYERS);
        let mut acts = Vec::with_capacity(LAYERS);
        let zeros = vec![0.0; d];
        for k in 0..LAYERS {
            let h = &hidden[k];
            let (w, b) = (self.p(&self.layout.conv_w[k]), self.p(&self.layout.conv_b[k]));
            let mut win_k = Vec::with_capacity(n);
            let mut act_k = Vec::with_capacity(n);
            let mut next = Vec::with_capacity(n);
            for i in 0..n {
                let left = if i > 0 { &h[i - 1] } else { &zeros };
                let right = if i + 1 < n { &h[i + 1] } else { &zeros };
                let u: Vec<f64> = left.iter().chain(&h[i]).chain(right.iter()).copied().collect();
                let g: Vec<f64> = affine(w, b, &u).into_iter().map(f64::tanh).collect();
                next.push(h[i].iter().zip(&g).map(|(x, y)| x + y).collect::<Vec<f64>>());
                win_k.push(u);
                act_k.push(g);
            }
            windows.push(win_k);
            acts.push(act_k);
            hidden.push(next);
        }
        EncoderCache {
            tokens,
            hidden,
            windows,
            acts,
        }
    }

    fn step(&self, states: &[Vec<f64>], y: u32, y_prev: u32, mask: Option<Vec<f64>>) -> StepCache {
        let d = self.config.width;
        let r: Vec<f64> = self.embed(y).iter().chain(self.embed(y_prev)).copied().collect();
        let q: Vec<f64> = affine(self.p(&self.layout.wq), self.p(&self.layout.bq), &r)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let scale = 1.0 / (d as f64).sqrt();
        let scores: Vec<f64> = states.iter().map(|h| dot(&q, h) * scale).collect();
        let alpha: Vec<f64> = log_softmax(&scores).into_iter().map(f64::exp).collect();
        let mut c = vec![0.0; d];
        for (a, h) in alpha.iter().zip(states) {
            for (ci, hi) in c.iter_mut().zip(h) {
                *ci += a * hi;
            }
        }
        let v: Vec<f64> = q.iter().chain(&c).copied().collect();
        let z: Vec<f64> = affine(self.p(&self.layout.wz), self.p(&self.layout.bz), &v)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let zd: Vec<f64> = match &mask {
            Some(m) => z.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => z.clone(),
        };
        let logits = affine(self.p(&self.layout.wo), self.p(&self.layout.bo), &zd);
        StepCache {
            y,
            y_prev,
            r,
            q,
            alpha,
            v,
            z,
            mask,
            zd,
            logprobs: log_softmax(&logits),
        }
    }

    fn dropout_mask(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let p = self.config.dropout;
        let keep = 1.0 / (1.0 - p);
        (0..self.config.width)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect()
    }
}

fn prev_token(inputs: &[u32], t: usize) -> u32 {
    if t == 0 {
        PAD
    } else {
        inputs[t - 1]
    }
}

impl Seq2Seq for TinySeq2Seq {
    type Encoded = TinyEncoded;

    fn kind(&self) -> &'static str {
        "tiny-seq2seq"
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn encode(&self, source: &[u32]) -> TinyEncoded {
        let mut cache = self.encode_cached(source);
        TinyEncoded {
            states: cache.hidden.pop().expect("encoder output"),
        }
    }

    fn decoder_logprobs(&self, encoded: &TinyEncoded, inputs: &[u32]) -> Vec<Vec<f64>> {
        (0..inputs.len())
            .map(|t| {
                self.step(&encoded.states, inputs[t], prev_token(inputs, t), None)
                    .logprobs
            })
            .collect()
    }

    fn next_logprobs(&self, encoded: &TinyEncoded, inputs: &[u32]) -> Vec<f64> {
        let t = inputs.len() - 1;
        self.step(&encoded.states, inputs[t], prev_token(inputs, t), None)
            .logprobs
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn loss_and_grad(&self, example: &Example, mut dropout: Option<&mut dyn RngCore>) -> Result<(f64, Vec<f64>)> {
        if example.target.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let d = self.config.width;
        let lay = &self.layout;
        let enc = self.encode_cached(&example.source);
        let states = &enc.hidden[LAYERS];
        let inputs = example.decoder_inputs();
        let steps: Vec<StepCache> = (0..inputs.len())
            .map(|t| {
                let mask = match (&mut dropout, self.config.dropout > 0.0) {
                    (Some(rng), true) => Some(self.dropout_mask(&mut **rng)),
                    _ => None,
                };
                self.step(states, inputs[t], prev_token(&inputs, t), mask)
            })
            .collect();
        let table: Vec<Vec<f64>> = steps.iter().map(|s| s.logprobs.clone()).collect();
        let (loss, dlogits) = pgg_loss_grad(&table, &example.target, example.prefix)?;

        let mut grad = vec![0.0; lay.total];
        let mut d_states = vec![vec![0.0; d]; states.len()];
        let scale = 1.0 / (d as f64).sqrt();
        for (s, dl) in steps.iter().zip(&dlogits).skip(example.prefix) {
            affine_back_weight(&mut grad[lay.wo.clone()], dl, &s.zd);
            add_into(&mut grad[lay.bo.clone()], dl);
            let mut dzd = vec![0.0; d];
            affine_back_input(self.p(&lay.wo), dl, &mut dzd);
            let dz: Vec<f64> = match &s.mask {
                Some(m) => dzd.iter().zip(m).map(|(a, b)| a * b).collect(),
                None => dzd,
            };
            let dpre_z: Vec<f64> = dz.iter().zip(&s.z).map(|(g, z)| g * (1.0 - z * z)).collect();
            affine_back_weight(&mut grad[lay.wz.clone()], &dpre_z, &s.v);
            add_into(&mut grad[lay.bz.clone()], &dpre_z);
            let mut dv = vec![0.0; 2 * d];
            affine_back_input(self.p(&lay.wz), &dpre_z, &mut dv);
            let (dq_direct, dc) = dv.split_at(d);

            let dalpha: Vec<f64> = states.iter().map(|h| dot(dc, h)).collect();
            let mean = dot(&s.alpha, &dalpha);
            let mut dq: Vec<f64> = dq_direct.to_vec();
            for (i, h) in states.iter().enumerate() {
                let ds = s.alpha[i] * (dalpha[i] - mean) * scale;
                for j in 0..d {
                    d_states[i][j] += s.alpha[i] * dc[j] + ds * s.q[j];
                    dq[j] += ds * h[j];
                }
            }
            let dpre_q: Vec<f64> = dq.iter().zip(&s.q).map(|(g, q)| g * (1.0 - q * q)).collect();
            affine_back_weight(&mut grad[lay.wq.clone()], &dpre_q, &s.r);
            add_into(&mut grad[lay.bq.clone()], &dpre_q);
            let mut dr = vec![0.0; 2 * d];
            affine_back_input(self.p(&lay.wq), &dpre_q, &mut dr);
            let (ey, ep) = (self.embed_offset(s.y), self.embed_offset(s.y_prev));
            add_into(&mut grad[ey..ey + d], &dr[..d]);
            add_into(&mut grad[ep..ep + d], &dr[d..]);
        }

        let n = enc.tokens.len();
        let mut dh = d_states;
        for k in (0..LAYERS).rev() {
            let mut below = dh.clone();
            for i in 0..n {
                let g = &enc.acts[k][i];
                let dpre: Vec<f64> = dh[i].iter().zip(g).map(|(a, g)| a * (1.0 - g * g)).collect();
                affine_back_weight(&mut grad[lay.conv_w[k].clone()], &dpre, &enc.windows[k][i]);
                add_into(&mut grad[lay.conv_b[k].clone()], &dpre);
                let mut du = vec![0.0; 3 * d];
                affine_back_input(self.p(&lay.conv_w[k]), &dpre, &mut du);
                if i > 0 {
                    add_into(&mut below[i - 1], &du[..d]);
                }
                add_into(&mut below[i], &du[d..2 * d]);
                if i + 1 < n {
                    add_into(&mut below[i + 1], &du[2 * d..]);
                }
            }
            dh = below;
        }
        for (tok, g) in enc.tokens.iter().zip(&dh) {
            let at = self.embed_offset(*tok);
            add_into(&mut grad[at..at + d], g);
        }
        Ok((loss, grad))
    }
}
