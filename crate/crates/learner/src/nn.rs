//! Attention encoder, actor and critic networks with hand-written gradients.
//!
//! Forward pass for one observation:
//!
//! ```text
//! X  (N x F)  token features, ln(1 + count) of each patch
//! E  = X We + be + P            P: fixed 2-D sinusoidal position code
//! Q  = E Wq,  K = E Wk,  V = tanh(E Wv)
//! A  = softmax_rows(Q K^T / sqrt(dk))
//! H  = E + (A V) Wo
//! p  = mean_rows(H)
//! h1 = tanh(p W1 + b1),  h2 = tanh(h1 W2 + b2)
//! ```
//!
//! The actor maps `h2` through five independent 97-way softmax heads and
//! the critic through a scalar head.

use hexcell_core::env::{Observation, ACTION_CHOICES, ACTION_HEADS};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, LearnError, Result};
use crate::tensor::{log_softmax, mm_acc, mmt_acc, mtm_acc, softmax, Block, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Token embedding width; a multiple of 4 so the position code splits
    /// evenly into sine/cosine pairs per axis.
    pub embed_dim: usize,
    pub key_dim: usize,
    pub hidden_dim: usize,
    /// Square patch side in grid cells; 1 gives one token per grid cell.
    pub patch: usize,
    /// Scale of the initial policy-head weights. Small values start the
    /// policy close to uniform.
    pub head_init_scale: f64,
    /// When non-zero, each head produces this many coefficients that are
    /// expanded over a fixed cosine basis of the 97 ordered choices, so
    /// neighboring thresholds share statistical strength. Zero gives an
    /// unconstrained hidden x 97 weight matrix per head.
    pub head_basis: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            key_dim: 16,
            hidden_dim: 64,
            patch: 1,
            head_init_scale: 0.01,
            head_basis: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(4) {
            return Err(LearnError::Config("embed_dim must be a positive multiple of 4".into()));
        }
        if self.key_dim == 0 || self.hidden_dim == 0 || self.patch == 0 {
            return Err(LearnError::Config("key_dim, hidden_dim and patch must be positive".into()));
        }
        if self.head_basis >= ACTION_CHOICES {
            return Err(LearnError::Config(format!("head_basis must be below {ACTION_CHOICES}")));
        }
        Ok(())
    }
}

/// Observation geometry the network is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub side: usize,
    pub window: usize,
}

/// Derived dimensions plus the fixed position code.
#[derive(Debug, Clone, PartialEq)]
pub struct Arch {
    pub input: InputShape,
    pub cfg: NetworkConfig,
    pub tokens_per_side: usize,
    pub tokens: usize,
    pub features: usize,
    pos: Vec<f64>,
    /// `head_basis x 97` expansion matrix; empty for unconstrained heads.
    basis: Vec<f64>,
}

impl Arch {
    pub fn new(input: InputShape, cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        if input.side == 0 || input.window == 0 {
            return Err(LearnError::Config("observation side and window must be positive".into()));
        }
        let tokens_per_side = input.side.div_ceil(cfg.patch);
        let tokens = tokens_per_side * tokens_per_side;
        let features = 2 * input.window * cfg.patch * cfg.patch;
        let d = cfg.embed_dim;
        let half = d / 2;
        let mut pos = vec![0.0; tokens * d];
        for t in 0..tokens {
            let (row, col) = ((t / tokens_per_side) as f64, (t % tokens_per_side) as f64);
            for j in 0..d {
                let coord = if j < half { row } else { col };
                let k = (j % half) / 2;
                let angle = coord / 10000f64.powf(2.0 * k as f64 / half as f64);
                pos[t * d + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
            }
        }
        // Cosine modes 1..=K over the ordered choices; mode 0 is a constant
        // shift that softmax ignores, so it is left out.
        let kb = cfg.head_basis;
        let mut basis = vec![0.0; kb * ACTION_CHOICES];
        for k in 0..kb {
            for j in 0..ACTION_CHOICES {
                basis[k * ACTION_CHOICES + j] = (std::f64::consts::PI * (k + 1) as f64 * (j as f64 + 0.5) / ACTION_CHOICES as f64).cos();
            }
        }
        Ok(Self {
            input,
            cfg: cfg.clone(),
            tokens_per_side,
            tokens,
            features,
            pos,
            basis,
        })
    }

    /// Width of each head's trainable output layer.
    pub fn head_width(&self) -> usize {
        if self.cfg.head_basis == 0 {
            ACTION_CHOICES
        } else {
            self.cfg.head_basis
        }
    }

    /// Flattens an observation into `N x F` token features.
    pub fn tokenize(&self, obs: &Observation) -> Result<Vec<f64>> {
        let side = self.input.side;
        if obs.side != side {
            return Err(shape_err("observation side", side, obs.side));
        }
        if obs.frames.len() != self.input.window {
            return Err(shape_err("observation window", self.input.window, obs.frames.len()));
        }
        let cells = side * side;
        if let Some(bad) = obs.frames.iter().find(|f| f.ued.len() != cells || f.csm.len() != cells) {
            return Err(shape_err("grid size", cells, bad.ued.len().max(bad.csm.len())));
        }
        let p = self.cfg.patch;
        let mut x = vec![0.0; self.tokens * self.features];
        for ty in 0..self.tokens_per_side {
            for tx in 0..self.tokens_per_side {
                let row = &mut x[(ty * self.tokens_per_side + tx) * self.features..][..self.features];
                for (fi, frame) in obs.frames.iter().enumerate() {
                    for (ci, grid) in [&frame.ued, &frame.csm].into_iter().enumerate() {
                        let channel = 2 * fi + ci;
                        for dy in 0..p {
                            for dx in 0..p {
                                let (gy, gx) = (ty * p + dy, tx * p + dx);
                                if gy < side && gx < side {
                                    row[channel * p * p + dy * p + dx] = (grid[gy * side + gx] as f64).ln_1p();
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(x)
    }
}

mod idx {
    pub const W_EMBED: usize = 0;
    pub const B_EMBED: usize = 1;
    pub const W_Q: usize = 2;
    pub const W_K: usize = 3;
    pub const W_V: usize = 4;
    pub const W_O: usize = 5;
    pub const W_1: usize = 6;
    pub const B_1: usize = 7;
    pub const W_2: usize = 8;
    pub const B_2: usize = 9;
    pub const HEADS: usize = 10;
}

fn normal_block<R: Rng + ?Sized>(rng: &mut R, name: &str, shape: &[usize], std: f64) -> Block {
    let mut b = Block::zeros(name, shape);
    if std > 0.0 {
        let dist = Normal::new(0.0, std).expect("finite std");
        b.data.iter_mut().for_each(|x| *x = dist.sample(rng));
    }
    b
}

fn encoder_blocks<R: Rng + ?Sized>(arch: &Arch, rng: &mut R) -> Vec<Block> {
    let (f, d, dk, h) = (arch.features, arch.cfg.embed_dim, arch.cfg.key_dim, arch.cfg.hidden_dim);
    let fan = |n: usize| 1.0 / (n as f64).sqrt();
    vec![
        normal_block(rng, "w_embed", &[f, d], fan(f)),
        Block::zeros("b_embed", &[d]),
        normal_block(rng, "w_q", &[d, dk], fan(d)),
        normal_block(rng, "w_k", &[d, dk], fan(d)),
        normal_block(rng, "w_v", &[d, d], fan(d)),
        normal_block(rng, "w_o", &[d, d], fan(d)),
        normal_block(rng, "w_1", &[d, h], fan(d)),
        Block::zeros("b_1", &[h]),
        normal_block(rng, "w_2", &[h, h], fan(h)),
        Block::zeros("b_2", &[h]),
    ]
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    x: Vec<f64>,
    e: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    h1: Vec<f64>,
    pub h2: Vec<f64>,
}

fn encoder_forward(arch: &Arch, params: &ParamSet, x: &[f64]) -> Result<EncoderCache> {
    let (n, f, d, dk, hd) = (
        arch.tokens,
        arch.features,
        arch.cfg.embed_dim,
        arch.cfg.key_dim,
        arch.cfg.hidden_dim,
    );
    if x.len() != n * f {
        return Err(shape_err("token features", n * f, x.len()));
    }
    let b = &params.blocks;
    let mut e = arch.pos.clone();
    for row in e.chunks_mut(d) {
        row.iter_mut().zip(&b[idx::B_EMBED].data).for_each(|(v, bias)| *v += bias);
    }
    mm_acc(x, &b[idx::W_EMBED].data, &mut e, n, f, d);

    let mut q = vec![0.0; n * dk];
    let mut k = vec![0.0; n * dk];
    let mut v = vec![0.0; n * d];
    mm_acc(&e, &b[idx::W_Q].data, &mut q, n, d, dk);
    mm_acc(&e, &b[idx::W_K].data, &mut k, n, d, dk);
    mm_acc(&e, &b[idx::W_V].data, &mut v, n, d, d);
    v.iter_mut().for_each(|x| *x = x.tanh());

    let mut s = vec![0.0; n * n];
    mmt_acc(&q, &k, &mut s, n, dk, n);
    let scale = 1.0 / (dk as f64).sqrt();
    let mut a = Vec::with_capacity(n * n);
    for row in s.chunks(n) {
        let scaled: Vec<f64> = row.iter().map(|x| x * scale).collect();
        a.extend(softmax(&scaled));
    }
    let mut z = vec![0.0; n * d];
    mm_acc(&a, &v, &mut z, n, n, d);
    let mut hmat = e.clone();
    mm_acc(&z, &b[idx::W_O].data, &mut hmat, n, d, d);

    let mut p = vec![0.0; d];
    for row in hmat.chunks(d) {
        p.iter_mut().zip(row).for_each(|(acc, x)| *acc += x);
    }
    p.iter_mut().for_each(|x| *x /= n as f64);

    let mut h1 = b[idx::B_1].data.clone();
    mm_acc(&p, &b[idx::W_1].data, &mut h1, 1, d, hd);
    h1.iter_mut().for_each(|x| *x = x.tanh());
    let mut h2 = b[idx::B_2].data.clone();
    mm_acc(&h1, &b[idx::W_2].data, &mut h2, 1, hd, hd);
    h2.iter_mut().for_each(|x| *x = x.tanh());

    Ok(EncoderCache {
        x: x.to_vec(),
        e,
        q,
        k,
        v,
        a,
        z,
        p,
        h1,
        h2,
    })
}

/// Accumulates encoder gradients into `grads` given `dL/dh2`.
fn encoder_backward(arch: &Arch, params: &ParamSet, c: &EncoderCache, dh2: &[f64], grads: &mut ParamSet) {
    let (n, f, d, dk, hd) = (
        arch.tokens,
        arch.features,
        arch.cfg.embed_dim,
        arch.cfg.key_dim,
        arch.cfg.hidden_dim,
    );
    let b = &params.blocks;
    let g = &mut grads.blocks;

    let da2: Vec<f64> = dh2.iter().zip(&c.h2).map(|(g, h)| g * (1.0 - h * h)).collect();
    mtm_acc(&c.h1, &da2, &mut g[idx::W_2].data, 1, hd, hd);
    g[idx::B_2].data.iter_mut().zip(&da2).for_each(|(acc, x)| *acc += x);
    let mut dh1 = vec![0.0; hd];
    mmt_acc(&da2, &b[idx::W_2].data, &mut dh1, 1, hd, hd);

    let da1: Vec<f64> = dh1.iter().zip(&c.h1).map(|(g, h)| g * (1.0 - h * h)).collect();
    mtm_acc(&c.p, &da1, &mut g[idx::W_1].data, 1, d, hd);
    g[idx::B_1].data.iter_mut().zip(&da1).for_each(|(acc, x)| *acc += x);
    let mut dp = vec![0.0; d];
    mmt_acc(&da1, &b[idx::W_1].data, &mut dp, 1, hd, d);

    // Mean pooling spreads dp evenly over the token rows of H.
    let dh_row: Vec<f64> = dp.iter().map(|x| x / n as f64).collect();
    let dh: Vec<f64> = dh_row.iter().copied().cycle().take(n * d).collect();

    let mut de = dh.clone();
    mtm_acc(&c.z, &dh, &mut g[idx::W_O].data, n, d, d);
    let mut dz = vec![0.0; n * d];
    mmt_acc(&dh, &b[idx::W_O].data, &mut dz, n, d, d);

    let mut da = vec![0.0; n * n];
    mmt_acc(&dz, &c.v, &mut da, n, d, n);
    let mut dv = vec![0.0; n * d];
    mtm_acc(&c.a, &dz, &mut dv, n, n, d);

    let scale = 1.0 / (dk as f64).sqrt();
    let mut ds = vec![0.0; n * n];
    for i in 0..n {
        let arow = &c.a[i * n..(i + 1) * n];
        let darow = &da[i * n..(i + 1) * n];
        let dot: f64 = arow.iter().zip(darow).map(|(a, g)| a * g).sum();
        for j in 0..n {
            ds[i * n + j] = arow[j] * (darow[j] - dot) * scale;
        }
    }
    let mut dq = vec![0.0; n * dk];
    mm_acc(&ds, &c.k, &mut dq, n, n, dk);
    let mut dkm = vec![0.0; n * dk];
    mtm_acc(&ds, &c.q, &mut dkm, n, n, dk);
    let dvp: Vec<f64> = dv.iter().zip(&c.v).map(|(g, v)| g * (1.0 - v * v)).collect();

    mtm_acc(&c.e, &dq, &mut g[idx::W_Q].data, n, d, dk);
    mtm_acc(&c.e, &dkm, &mut g[idx::W_K].data, n, d, dk);
    mtm_acc(&c.e, &dvp, &mut g[idx::W_V].data, n, d, d);
    mmt_acc(&dq, &b[idx::W_Q].data, &mut de, n, dk, d);
    mmt_acc(&dkm, &b[idx::W_K].data, &mut de, n, dk, d);
    mmt_acc(&dvp, &b[idx::W_V].data, &mut de, n, d, d);

    mtm_acc(&c.x, &de, &mut g[idx::W_EMBED].data, n, f, d);
    for row in de.chunks(d) {
        g[idx::B_EMBED].data.iter_mut().zip(row).for_each(|(acc, x)| *acc += x);
    }
}

/// Actor: shared encoder followed by five categorical heads.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub arch: Arch,
    pub params: ParamSet,
}

#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub cache: EncoderCache,
    pub logits: Vec<Vec<f64>>,
}

impl PolicyOutput {
    pub fn probs(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|l| softmax(l)).collect()
    }

    pub fn log_probs(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|l| log_softmax(l)).collect()
    }
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(arch: Arch, rng: &mut R) -> Self {
        let mut blocks = encoder_blocks(&arch, rng);
        let h = arch.cfg.hidden_dim;
        for head in 0..ACTION_HEADS {
            let std = arch.cfg.head_init_scale / (h as f64).sqrt();
            let width = arch.head_width();
            blocks.push(normal_block(rng, &format!("w_head{head}"), &[h, width], std));
            blocks.push(Block::zeros(&format!("b_head{head}"), &[width]));
        }
        Self {
            arch,
            params: ParamSet { blocks },
        }
    }

    pub fn forward_features(&self, x: &[f64]) -> Result<PolicyOutput> {
        let cache = encoder_forward(&self.arch, &self.params, x)?;
        let h = self.arch.cfg.hidden_dim;
        let width = self.arch.head_width();
        let logits = (0..ACTION_HEADS)
            .map(|head| {
                let mut c = self.params.blocks[idx::HEADS + 2 * head + 1].data.clone();
                mm_acc(&cache.h2, &self.params.blocks[idx::HEADS + 2 * head].data, &mut c, 1, h, width);
                if self.arch.basis.is_empty() {
                    c
                } else {
                    let mut l = vec![0.0; ACTION_CHOICES];
                    mm_acc(&c, &self.arch.basis, &mut l, 1, width, ACTION_CHOICES);
                    l
                }
            })
            .collect();
        Ok(PolicyOutput { cache, logits })
    }

    /// Five categorical distributions for one observation.
    pub fn forward(&self, obs: &Observation) -> Result<Vec<Vec<f64>>> {
        let x = self.arch.tokenize(obs)?;
        Ok(self.forward_features(&x)?.probs())
    }

    /// Accumulates parameter gradients given `dL/dlogits` for every head.
    pub fn backward(&self, out: &PolicyOutput, dlogits: &[Vec<f64>], grads: &mut ParamSet) {
        let h = self.arch.cfg.hidden_dim;
        let mut dh2 = vec![0.0; h];
        let width = self.arch.head_width();
        for (head, dl) in dlogits.iter().enumerate() {
            let wi = idx::HEADS + 2 * head;
            let dc = if self.arch.basis.is_empty() {
                dl.clone()
            } else {
                let mut dc = vec![0.0; width];
                mmt_acc(dl, &self.arch.basis, &mut dc, 1, ACTION_CHOICES, width);
                dc
            };
            mtm_acc(&out.cache.h2, &dc, &mut grads.blocks[wi].data, 1, h, width);
            grads.blocks[wi + 1].data.iter_mut().zip(&dc).for_each(|(acc, x)| *acc += x);
            mmt_acc(&dc, &self.params.blocks[wi].data, &mut dh2, 1, width, h);
        }
        encoder_backward(&self.arch, &self.params, &out.cache, &dh2, grads);
    }
}

/// Critic: same encoder architecture with its own weights and a scalar head.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub arch: Arch,
    pub params: ParamSet,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(arch: Arch, rng: &mut R) -> Self {
        let mut blocks = encoder_blocks(&arch, rng);
        let h = arch.cfg.hidden_dim;
        blocks.push(normal_block(rng, "w_value", &[h], 1.0 / (h as f64).sqrt()));
        blocks.push(Block::zeros("b_value", &[1]));
        Self {
            arch,
            params: ParamSet { blocks },
        }
    }

    pub fn forward_features(&self, x: &[f64]) -> Result<(EncoderCache, f64)> {
        let cache = encoder_forward(&self.arch, &self.params, x)?;
        let b = &self.params.blocks;
        let v = b[idx::HEADS + 1].data[0] + cache.h2.iter().zip(&b[idx::HEADS].data).map(|(h, w)| h * w).sum::<f64>();
        Ok((cache, v))
    }

    pub fn forward(&self, obs: &Observation) -> Result<f64> {
        let x = self.arch.tokenize(obs)?;
        Ok(self.forward_features(&x)?.1)
    }

    pub fn backward(&self, cache: &EncoderCache, dv: f64, grads: &mut ParamSet) {
        let w = &self.params.blocks[idx::HEADS].data;
        grads.blocks[idx::HEADS]
            .data
            .iter_mut()
            .zip(&cache.h2)
            .for_each(|(acc, h)| *acc += dv * h);
        grads.blocks[idx::HEADS + 1].data[0] += dv;
        let dh2: Vec<f64> = w.iter().map(|w| w * dv).collect();
        encoder_backward(&self.arch, &self.params, cache, &dh2, grads);
    }
}
