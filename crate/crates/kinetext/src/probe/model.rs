//! The dual-encoder probe: a video MLP and a text MLP meeting in one
//! unit-normalized space, a matching head on the concatenated pair, and a
//! video-conditioned masked-token classifier. All math is f64 with
//! hand-derived gradients so the finite-difference check can hold the whole
//! model to < 1e-4 relative error.
//!
//! Objectives (summed with equal weight):
//! - symmetric temperature-scaled cross-entropy over the in-batch
//!   similarity matrix (both video→text and text→video directions),
//! - binary cross-entropy on matched pairs vs cyclically shifted
//!   in-batch negatives,
//! - cross-entropy on masked caption tokens predicted from the video
//!   embedding plus the masked caption's mean embedding.

use std::collections::HashMap;

use rand::Rng;

use crate::analytics::tokenize;
use crate::error::{Error, Result};

use super::features::VideoFeature;

/// Words never selected for masking.
const ARTICLES: [&str; 2] = ["a", "the"];

/// Smallest temperature the optimizer may reach.
pub const TAU_FLOOR: f64 = 0.01;

const NORM_EPS: f64 = 1e-12;

/// Closed caption vocabulary: id 0 is the mask token, id 1 the
/// unknown-word token, the rest are corpus words in sorted order.
#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

pub const MASK_ID: usize = 0;
pub const UNK_ID: usize = 1;

impl Vocab {
    pub fn build<S: AsRef<str>>(captions: impl IntoIterator<Item = S>) -> Vocab {
        let mut set = std::collections::BTreeSet::new();
        for caption in captions {
            for token in tokenize(caption.as_ref()) {
                set.insert(token);
            }
        }
        let mut words = vec!["[MASK]".to_owned(), "[UNK]".to_owned()];
        words.extend(set);
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty() // never true: the special tokens always exist
    }

    pub fn id_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    /// Token ids of a caption; unknown words map to [`UNK_ID`].
    pub fn encode(&self, caption: &str) -> Vec<usize> {
        tokenize(caption).iter().map(|t| self.id_of(t).unwrap_or(UNK_ID)).collect()
    }

    /// Positions eligible for masking: everything but articles.
    pub fn maskable_positions(&self, ids: &[usize]) -> Vec<usize> {
        ids.iter()
            .enumerate()
            .filter(|(_, &id)| !ARTICLES.contains(&self.word(id)))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Dense layer, row-major weights (out x in).
#[derive(Debug, Clone)]
struct Linear {
    w: Vec<f64>,
    b: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Linear {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim).map(|_| rng.gen_range(-limit..limit)).collect();
        Linear { w, b: vec![0.0; out_dim], in_dim, out_dim }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut y = self.b.clone();
        for (o, y_o) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            *y_o += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, x: &[f64], dy: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let g = dy[o];
            gb[o] += g;
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

fn tanh_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// d(tanh)/dx applied to an upstream gradient, using the cached outputs.
fn tanh_backward(h: &[f64], dh: &[f64]) -> Vec<f64> {
    h.iter().zip(dh).map(|(h, d)| d * (1.0 - h * h)).collect()
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(z: &[f64]) -> (Vec<f64>, f64) {
    let n = l2_norm(z).max(NORM_EPS);
    (z.iter().map(|v| v / n).collect(), n)
}

/// Gradient through zhat = z / ||z||.
fn normalize_backward(zhat: &[f64], n: f64, dzhat: &[f64]) -> Vec<f64> {
    let dot: f64 = zhat.iter().zip(dzhat).map(|(a, b)| a * b).sum();
    zhat.iter().zip(dzhat).map(|(zh, d)| (d - zh * dot) / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable binary cross-entropy with logits.
fn bce_with_logits(s: f64, y: f64) -> f64 {
    s.max(0.0) - s * y + (-s.abs()).exp().ln_1p()
}

/// Everything the trainer can tune.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeHyperparams {
    /// Dimension of the shared contrastive space.
    pub embed_dim: usize,
    /// Hidden width of every 2-layer perceptron.
    pub hidden_dim: usize,
    /// Word embedding dimension.
    pub text_embed_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Fraction of maskable (non-article) tokens masked per caption.
    pub mask_fraction: f64,
    pub tau_init: f64,
    pub seed: u64,
}

impl Default for ProbeHyperparams {
    fn default() -> Self {
        ProbeHyperparams {
            embed_dim: 32,
            hidden_dim: 64,
            text_embed_dim: 32,
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            clip_norm: 5.0,
            mask_fraction: 0.25,
            tau_init: 0.07,
            seed: 0,
        }
    }
}

impl ProbeHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.text_embed_dim == 0 {
            return Err(Error::Probe("probe dimensions must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Probe("batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::Probe(format!(
                "mask_fraction must be in [0, 1], got {}",
                self.mask_fraction
            )));
        }
        if self.tau_init < TAU_FLOOR {
            return Err(Error::Probe(format!("tau_init must be >= {TAU_FLOOR}")));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.learning_rate) || !positive(self.clip_norm) {
            return Err(Error::Probe("learning_rate and clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// The probe's parameters. The layout (and the RNG draw order at init) is
/// fixed: embed, v1, v2, t1, t2, m1, m2, g1, g2, tau.
#[derive(Debug, Clone)]
pub struct ProbeModel {
    pub(crate) vocab: Vocab,
    hp: ProbeHyperparams,
    video_dim: usize,
    embed: Vec<f64>, // vocab.len() x text_embed_dim
    v1: Linear,
    v2: Linear,
    t1: Linear,
    t2: Linear,
    m1: Linear,
    m2: Linear,
    g1: Linear,
    g2: Linear,
    tau: f64,
}

/// Gradient buffers matching [`ProbeModel`]'s parameter layout.
#[derive(Debug, Clone)]
pub struct ProbeGrads {
    embed: Vec<f64>,
    v1w: Vec<f64>,
    v1b: Vec<f64>,
    v2w: Vec<f64>,
    v2b: Vec<f64>,
    t1w: Vec<f64>,
    t1b: Vec<f64>,
    t2w: Vec<f64>,
    t2b: Vec<f64>,
    m1w: Vec<f64>,
    m1b: Vec<f64>,
    m2w: Vec<f64>,
    m2b: Vec<f64>,
    g1w: Vec<f64>,
    g1b: Vec<f64>,
    g2w: Vec<f64>,
    g2b: Vec<f64>,
    pub tau: f64,
}

impl ProbeGrads {
    fn zeros_like(model: &ProbeModel) -> ProbeGrads {
        ProbeGrads {
            embed: vec![0.0; model.embed.len()],
            v1w: vec![0.0; model.v1.w.len()],
            v1b: vec![0.0; model.v1.b.len()],
            v2w: vec![0.0; model.v2.w.len()],
            v2b: vec![0.0; model.v2.b.len()],
            t1w: vec![0.0; model.t1.w.len()],
            t1b: vec![0.0; model.t1.b.len()],
            t2w: vec![0.0; model.t2.w.len()],
            t2b: vec![0.0; model.t2.b.len()],
            m1w: vec![0.0; model.m1.w.len()],
            m1b: vec![0.0; model.m1.b.len()],
            m2w: vec![0.0; model.m2.w.len()],
            m2b: vec![0.0; model.m2.b.len()],
            g1w: vec![0.0; model.g1.w.len()],
            g1b: vec![0.0; model.g1.b.len()],
            g2w: vec![0.0; model.g2.w.len()],
            g2b: vec![0.0; model.g2.b.len()],
            tau: 0.0,
        }
    }

    fn tensors(&self) -> [&[f64]; 17] {
        [
            &self.embed, &self.v1w, &self.v1b, &self.v2w, &self.v2b, &self.t1w, &self.t1b,
            &self.t2w, &self.t2b, &self.m1w, &self.m1b, &self.m2w, &self.m2b, &self.g1w,
            &self.g1b, &self.g2w, &self.g2b,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 17] {
        [
            &mut self.embed, &mut self.v1w, &mut self.v1b, &mut self.v2w, &mut self.v2b,
            &mut self.t1w, &mut self.t1b, &mut self.t2w, &mut self.t2b, &mut self.m1w,
            &mut self.m1b, &mut self.m2w, &mut self.m2b, &mut self.g1w, &mut self.g1b,
            &mut self.g2w, &mut self.g2b,
        ]
    }

    /// sqrt of the summed squared entries, tau included.
    pub fn global_norm(&self) -> f64 {
        let sq: f64 = self
            .tensors()
            .iter()
            .map(|t| t.iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            + self.tau * self.tau;
        sq.sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for g in t.iter_mut() {
                *g *= factor;
            }
        }
        self.tau *= factor;
    }

    pub fn is_finite(&self) -> bool {
        self.tau.is_finite()
            && self.tensors().iter().all(|t| t.iter().all(|g| g.is_finite()))
    }

    /// Flat read access mirroring [`ProbeModel::param`].
    pub fn param(&self, idx: usize) -> f64 {
        let mut rest = idx;
        for t in self.tensors() {
            if rest < t.len() {
                return t[rest];
            }
            rest -= t.len();
        }
        debug_assert_eq!(rest, 0);
        self.tau
    }
}

/// Cached forward state of one encoder tower.
struct TowerCache {
    x: Vec<f64>,
    h: Vec<f64>,
    n: f64,
    zhat: Vec<f64>,
}

/// Per-batch loss readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLosses {
    pub total: f64,
    pub contrastive: f64,
    pub matching: f64,
    pub mlm: f64,
    /// Masked positions that contributed to the MLM term.
    pub masked: usize,
    /// True when the batch was too small for the paired objectives.
    pub contrast_skipped: bool,
}

/// Symmetric temperature-scaled cross-entropy over a batch of normalized
/// embeddings. Returns the loss plus gradients w.r.t. every embedding and
/// the temperature.
pub(crate) fn contrastive_from_embeddings(
    zv: &[Vec<f64>],
    zt: &[Vec<f64>],
    tau: f64,
) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>, f64) {
    let b = zv.len();
    debug_assert!(b >= 2 && zt.len() == b);
    let d = zv[0].len();
    let sim: Vec<Vec<f64>> = zv.iter().map(|v| zt.iter().map(|t| dot(v, t)).collect()).collect();
    let s: Vec<Vec<f64>> = sim.iter().map(|row| row.iter().map(|x| x / tau).collect()).collect();

    let mut loss = 0.0;
    let mut ds = vec![vec![0.0; b]; b];
    let inv = 1.0 / (2.0 * b as f64);
    // Video -> text direction: softmax over each row.
    for i in 0..b {
        loss += (log_sum_exp(&s[i]) - s[i][i]) / (2.0 * b as f64);
        let p = softmax(&s[i]);
        for j in 0..b {
            ds[i][j] += inv * (p[j] - if i == j { 1.0 } else { 0.0 });
        }
    }
    // Text -> video direction: softmax over each column.
    for j in 0..b {
        let col: Vec<f64> = (0..b).map(|i| s[i][j]).collect();
        loss += (log_sum_exp(&col) - s[j][j]) / (2.0 * b as f64);
        let q = softmax(&col);
        for i in 0..b {
            ds[i][j] += inv * (q[i] - if i == j { 1.0 } else { 0.0 });
        }
    }

    let mut dzv = vec![vec![0.0; d]; b];
    let mut dzt = vec![vec![0.0; d]; b];
    let mut dtau = 0.0;
    for i in 0..b {
        for j in 0..b {
            let g = ds[i][j];
            if g == 0.0 {
                continue;
            }
            for k in 0..d {
                dzv[i][k] += g * zt[j][k] / tau;
                dzt[j][k] += g * zv[i][k] / tau;
            }
            dtau -= g * sim[i][j] / (tau * tau);
        }
    }
    (loss, dzv, dzt, dtau)
}

/// The loss [`contrastive_from_embeddings`] takes on a batch whose
/// similarity matrix is exactly (1/tau) * identity: matched pairs aligned,
/// all cross pairs orthogonal.
pub fn contrastive_aligned_orthogonal_loss(batch: usize, tau: f64) -> f64 {
    ((batch as f64 - 1.0) * (-1.0 / tau).exp()).ln_1p()
}

/// Unconditional lower bound of the contrastive loss over unit-norm
/// embeddings: cosine similarities live in [-1, 1], so a cross pair can sit
/// at most 2 below its matched pair, bounding every row/column term.
pub fn contrastive_floor(batch: usize, tau: f64) -> f64 {
    ((batch as f64 - 1.0) * (-2.0 / tau).exp()).ln_1p()
}

impl ProbeModel {
    /// Initializes all parameters from the hyperparameter seed. `video_dim`
    /// is the (fixed) video feature length.
    pub fn new(video_dim: usize, vocab: Vocab, hp: &ProbeHyperparams, rng: &mut impl Rng) -> Result<ProbeModel> {
        hp.validate()?;
        if video_dim == 0 {
            return Err(Error::Probe("video feature dimension must be positive".into()));
        }
        let (d, h, e) = (hp.embed_dim, hp.hidden_dim, hp.text_embed_dim);
        let v = vocab.len();
        let embed = (0..v * e).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let v1 = Linear::new(video_dim, h, rng);
        let v2 = Linear::new(h, d, rng);
        let t1 = Linear::new(e, h, rng);
        let t2 = Linear::new(h, d, rng);
        let m1 = Linear::new(2 * d, h, rng);
        let m2 = Linear::new(h, 1, rng);
        let g1 = Linear::new(d + e, h, rng);
        let g2 = Linear::new(h, v, rng);
        Ok(ProbeModel {
            vocab,
            hp: hp.clone(),
            video_dim,
            embed,
            v1,
            v2,
            t1,
            t2,
            m1,
            m2,
            g1,
            g2,
            tau: hp.tau_init,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn video_dim(&self) -> usize {
        self.video_dim
    }

    pub fn hyperparams(&self) -> &ProbeHyperparams {
        &self.hp
    }

    fn embed_row(&self, id: usize) -> &[f64] {
        let e = self.hp.text_embed_dim;
        &self.embed[id * e..(id + 1) * e]
    }

    /// Mean word embedding of a token sequence.
    fn mean_embedding(&self, ids: &[usize]) -> Vec<f64> {
        let e = self.hp.text_embed_dim;
        let mut m = vec![0.0; e];
        for &id in ids {
            for (k, v) in self.embed_row(id).iter().enumerate() {
                m[k] += v;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        m
    }

    fn video_tower(&self, feature: &VideoFeature) -> TowerCache {
        let x = feature.values.clone();
        let h = tanh_vec(&self.v1.forward(&x));
        let z = self.v2.forward(&h);
        let (zhat, n) = normalize(&z);
        TowerCache { x, h, n, zhat }
    }

    fn text_tower(&self, ids: &[usize]) -> TowerCache {
        let x = self.mean_embedding(ids);
        let h = tanh_vec(&self.t1.forward(&x));
        let z = self.t2.forward(&h);
        let (zhat, n) = normalize(&z);
        TowerCache { x, h, n, zhat }
    }

    /// Video embedding in the shared space.
    pub fn encode_video(&self, feature: &VideoFeature) -> Vec<f64> {
        self.video_tower(feature).zhat
    }

    /// Text embedding in the shared space.
    pub fn encode_text(&self, ids: &[usize]) -> Vec<f64> {
        self.text_tower(ids).zhat
    }

    fn matching_logit_from(&self, zv: &[f64], zt: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let mut u = Vec::with_capacity(zv.len() + zt.len());
        u.extend_from_slice(zv);
        u.extend_from_slice(zt);
        let h = tanh_vec(&self.m1.forward(&u));
        let s = self.m2.forward(&h)[0];
        (u, h, s)
    }

    /// The pair score F(v, t): the matching head's logit.
    pub fn matching_score(&self, feature: &VideoFeature, ids: &[usize]) -> f64 {
        let zv = self.encode_video(feature);
        let zt = self.encode_text(ids);
        self.matching_logit_from(&zv, &zt).2
    }

    /// The matching logit from already-encoded embeddings, so rankers can
    /// reuse tower outputs across a whole candidate set.
    pub fn matching_logit(&self, zv: &[f64], zt: &[f64]) -> f64 {
        self.matching_logit_from(zv, zt).2
    }

    fn mlm_input(&self, zv: Option<&[f64]>, masked_ids: &[usize]) -> Vec<f64> {
        let d = self.hp.embed_dim;
        let mut u = vec![0.0; d];
        if let Some(zv) = zv {
            u.copy_from_slice(zv);
        }
        u.extend(self.mean_embedding(masked_ids));
        u
    }

    /// Vocabulary logits for the masked caption. `feature` = None runs the
    /// video-blind ablation (zero video embedding).
    pub fn mlm_logits(&self, feature: Option<&VideoFeature>, masked_ids: &[usize]) -> Vec<f64> {
        let zv = feature.map(|f| self.encode_video(f));
        let u = self.mlm_input(zv.as_deref(), masked_ids);
        let h = tanh_vec(&self.g1.forward(&u));
        self.g2.forward(&h)
    }

    /// Argmax token prediction for a masked caption.
    pub fn predict_masked(&self, feature: Option<&VideoFeature>, masked_ids: &[usize]) -> usize {
        let logits = self.mlm_logits(feature, masked_ids);
        logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(i, _)| i)
            .expect("non-empty vocabulary")
    }

    /// Forward pass over one batch, optionally accumulating gradients.
    ///
    /// `masks[i]` lists the masked positions of caption `i`; the MLM term
    /// covers exactly those. Batches of one skip the contrastive and
    /// matching objectives (reported via `contrast_skipped`).
    pub(crate) fn forward_backward(
        &self,
        feats: &[&VideoFeature],
        ids: &[Vec<usize>],
        masks: &[Vec<usize>],
        video_blind: bool,
        mut grads: Option<&mut ProbeGrads>,
    ) -> Result<BatchLosses> {
        let b = feats.len();
        if b == 0 || ids.len() != b || masks.len() != b {
            return Err(Error::Probe("batch inputs must be equal-length and non-empty".into()));
        }
        for f in feats {
            if f.len() != self.video_dim {
                return Err(Error::Probe(format!(
                    "video feature has length {}, model expects {}",
                    f.len(),
                    self.video_dim
                )));
            }
        }
        for id_seq in ids {
            if id_seq.is_empty() {
                return Err(Error::Probe("cannot encode an empty caption".into()));
            }
        }

        let vcaches: Vec<TowerCache> = feats.iter().map(|f| self.video_tower(f)).collect();
        let tcaches: Vec<TowerCache> = ids.iter().map(|i| self.text_tower(i)).collect();
        let d = self.hp.embed_dim;
        let e = self.hp.text_embed_dim;

        let mut dzv_hat = vec![vec![0.0; d]; b];
        let mut dzt_hat = vec![vec![0.0; d]; b];
        let mut dtau = 0.0;

        // (i) symmetric contrastive loss over the similarity matrix.
        let contrast_skipped = b < 2;
        let mut contrastive = 0.0;
        if !contrast_skipped {
            let zv: Vec<Vec<f64>> = vcaches.iter().map(|c| c.zhat.clone()).collect();
            let zt: Vec<Vec<f64>> = tcaches.iter().map(|c| c.zhat.clone()).collect();
            let (loss, dzv, dzt, dt) = contrastive_from_embeddings(&zv, &zt, self.tau);
            contrastive = loss;
            for i in 0..b {
                for k in 0..d {
                    dzv_hat[i][k] += dzv[i][k];
                    dzt_hat[i][k] += dzt[i][k];
                }
            }
            dtau += dt;
        }

        // (ii) matching head: positives (i, i), negatives (i, i+1 mod b).
        let mut matching = 0.0;
        if !contrast_skipped {
            let weight = 1.0 / (2.0 * b as f64);
            for i in 0..b {
                for (j, y) in [(i, 1.0), ((i + 1) % b, 0.0)] {
                    let (u, h, s) = self.matching_logit_from(&vcaches[i].zhat, &tcaches[j].zhat);
                    matching += weight * bce_with_logits(s, y);
                    if let Some(g) = grads.as_deref_mut() {
                        let ds = weight * (sigmoid(s) - y);
                        let dh = self.m2.backward(&h, &[ds], &mut g.m2w, &mut g.m2b);
                        let da = tanh_backward(&h, &dh);
                        let du = self.m1.backward(&u, &da, &mut g.m1w, &mut g.m1b);
                        for k in 0..d {
                            dzv_hat[i][k] += du[k];
                            dzt_hat[j][k] += du[d + k];
                        }
                    }
                }
            }
        }

        // (iii) video-conditioned masked-token prediction.
        let total_masked: usize = masks.iter().map(Vec::len).sum();
        let mut mlm = 0.0;
        if total_masked > 0 {
            let inv = 1.0 / total_masked as f64;
            for i in 0..b {
                if masks[i].is_empty() {
                    continue;
                }
                let mut masked_ids = ids[i].clone();
                for &pos in &masks[i] {
                    masked_ids[pos] = MASK_ID;
                }
                let zv = if video_blind { None } else { Some(vcaches[i].zhat.as_slice()) };
                let u = self.mlm_input(zv, &masked_ids);
                let h = tanh_vec(&self.g1.forward(&u));
                let logits = self.g2.forward(&h);
                let lse = log_sum_exp(&logits);
                let p = softmax(&logits);
                let mut dlogits = vec![0.0; logits.len()];
                for &pos in &masks[i] {
                    let target = ids[i][pos];
                    mlm += inv * (lse - logits[target]);
                    for (k, dl) in dlogits.iter_mut().enumerate() {
                        *dl += inv * (p[k] - if k == target { 1.0 } else { 0.0 });
                    }
                }
                if let Some(g) = grads.as_deref_mut() {
                    let dh = self.g2.backward(&h, &dlogits, &mut g.g2w, &mut g.g2b);
                    let da = tanh_backward(&h, &dh);
                    let du = self.g1.backward(&u, &da, &mut g.g1w, &mut g.g1b);
                    if !video_blind {
                        for k in 0..d {
                            dzv_hat[i][k] += du[k];
                        }
                    }
                    // Mean-embedding gradient spreads over the masked ids.
                    let inv_len = 1.0 / masked_ids.len() as f64;
                    for &id in &masked_ids {
                        for k in 0..e {
                            g.embed[id * e + k] += du[d + k] * inv_len;
                        }
                    }
                }
            }
        }

        if let Some(g) = grads {
            g.tau += dtau;
            for i in 0..b {
                // Video tower backward.
                let c = &vcaches[i];
                let dz = normalize_backward(&c.zhat, c.n, &dzv_hat[i]);
                let dh = self.v2.backward(&c.h, &dz, &mut g.v2w, &mut g.v2b);
                let da = tanh_backward(&c.h, &dh);
                self.v1.backward(&c.x, &da, &mut g.v1w, &mut g.v1b);
                // Text tower backward, into the embedding table.
                let c = &tcaches[i];
                let dz = normalize_backward(&c.zhat, c.n, &dzt_hat[i]);
                let dh = self.t2.backward(&c.h, &dz, &mut g.t2w, &mut g.t2b);
                let da = tanh_backward(&c.h, &dh);
                let dm = self.t1.backward(&c.x, &da, &mut g.t1w, &mut g.t1b);
                let inv_len = 1.0 / ids[i].len() as f64;
                for &id in &ids[i] {
                    for (k, dm_k) in dm.iter().enumerate() {
                        g.embed[id * e + k] += dm_k * inv_len;
                    }
                }
            }
        }

        let total = contrastive + matching + mlm;
        Ok(BatchLosses { total, contrastive, matching, mlm, masked: total_masked, contrast_skipped })
    }

    /// Fresh zeroed gradient buffers for this model.
    pub fn new_grads(&self) -> ProbeGrads {
        ProbeGrads::zeros_like(self)
    }

    /// One clipped SGD step. The temperature is clamped to stay positive.
    pub fn apply_sgd(&mut self, grads: &mut ProbeGrads, lr: f64, clip_norm: f64) {
        let norm = grads.global_norm();
        if norm > clip_norm {
            grads.scale(clip_norm / norm);
        }
        let pairs: [(&mut Vec<f64>, &[f64]); 17] = {
            let g = grads.tensors();
            [
                (&mut self.embed, g[0]),
                (&mut self.v1.w, g[1]),
                (&mut self.v1.b, g[2]),
                (&mut self.v2.w, g[3]),
                (&mut self.v2.b, g[4]),
                (&mut self.t1.w, g[5]),
                (&mut self.t1.b, g[6]),
                (&mut self.t2.w, g[7]),
                (&mut self.t2.b, g[8]),
                (&mut self.m1.w, g[9]),
                (&mut self.m1.b, g[10]),
                (&mut self.m2.w, g[11]),
                (&mut self.m2.b, g[12]),
                (&mut self.g1.w, g[13]),
                (&mut self.g1.b, g[14]),
                (&mut self.g2.w, g[15]),
                (&mut self.g2.b, g[16]),
            ]
        };
        for (params, g) in pairs {
            for (p, g) in params.iter_mut().zip(g) {
                *p -= lr * g;
            }
        }
        self.tau = (self.tau - lr * grads.tau).max(TAU_FLOOR);
    }

    fn tensors(&self) -> [&Vec<f64>; 17] {
        [
            &self.embed, &self.v1.w, &self.v1.b, &self.v2.w, &self.v2.b, &self.t1.w, &self.t1.b,
            &self.t2.w, &self.t2.b, &self.m1.w, &self.m1.b, &self.m2.w, &self.m2.b, &self.g1.w,
            &self.g1.b, &self.g2.w, &self.g2.b,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 17] {
        [
            &mut self.embed, &mut self.v1.w, &mut self.v1.b, &mut self.v2.w, &mut self.v2.b,
            &mut self.t1.w, &mut self.t1.b, &mut self.t2.w, &mut self.t2.b, &mut self.m1.w,
            &mut self.m1.b, &mut self.m2.w, &mut self.m2.b, &mut self.g1.w, &mut self.g1.b,
            &mut self.g2.w, &mut self.g2.b,
        ]
    }

    /// Total flat parameter count, temperature included.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum::<usize>() + 1
    }

    /// Flat parameter read; the final index is the temperature.
    pub fn param(&self, idx: usize) -> f64 {
        let mut rest = idx;
        for t in self.tensors() {
            if rest < t.len() {
                return t[rest];
            }
            rest -= t.len();
        }
        debug_assert_eq!(rest, 0);
        self.tau
    }

    /// Flat parameter nudge used by the finite-difference check.
    pub fn add_to_param(&mut self, idx: usize, delta: f64) {
        let mut rest = idx;
        for t in self.tensors_mut() {
            if rest < t.len() {
                t[rest] += delta;
                return;
            }
            rest -= t.len();
        }
        debug_assert_eq!(rest, 0);
        self.tau += delta;
    }
}

/// Compares analytic gradients against central finite differences (step
/// 1e-4) on a random subset of parameters plus the temperature, returning
/// the maximum relative error. The batch and masks must be fixed by the
/// caller so both sides differentiate the same function.
pub fn gradient_check(
    model: &mut ProbeModel,
    feats: &[&VideoFeature],
    ids: &[Vec<usize>],
    masks: &[Vec<usize>],
    rng: &mut impl Rng,
) -> Result<f64> {
    gradient_check_inner(model, feats, ids, masks, rng, false)
}

pub(crate) fn gradient_check_inner(
    model: &mut ProbeModel,
    feats: &[&VideoFeature],
    ids: &[Vec<usize>],
    masks: &[Vec<usize>],
    rng: &mut impl Rng,
    sabotage_zero_analytic: bool,
) -> Result<f64> {
    let mut grads = model.new_grads();
    model.forward_backward(feats, ids, masks, false, Some(&mut grads))?;

    let p = model.param_count();
    let subset = 48.min(p - 1);
    let mut indices: Vec<usize> = (0..subset).map(|_| rng.gen_range(0..p - 1)).collect();
    indices.push(p - 1); // always check the temperature
    indices.sort_unstable();
    indices.dedup();

    const H: f64 = 1e-4;
    let mut max_rel: f64 = 0.0;
    for idx in indices {
        let analytic = if sabotage_zero_analytic { 0.0 } else { grads.param(idx) };
        model.add_to_param(idx, H);
        let plus = model.forward_backward(feats, ids, masks, false, None)?.total;
        model.add_to_param(idx, -2.0 * H);
        let minus = model.forward_backward(feats, ids, masks, false, None)?.total;
        model.add_to_param(idx, H);
        let numeric = (plus - minus) / (2.0 * H);
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale < 1e-6 { (analytic - numeric).abs() } else { (analytic - numeric).abs() / scale };
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
