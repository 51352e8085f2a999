//! Mini-batch SGD training loop for the probe: shuffled epochs, fresh mask
//! sampling every pass, global-norm clipping, and non-finite detection with
//! actionable diagnostics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::features::ProbeExample;
use super::model::{ProbeHyperparams, ProbeModel, Vocab};

/// Loss readout for one epoch (means over all examples seen).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub contrastive: f64,
    pub matching: f64,
    pub mlm: f64,
}

/// What training observed, next to the model itself.
#[derive(Debug, Clone, Default)]
pub struct TrainMetrics {
    pub epoch_losses: Vec<EpochLoss>,
    pub warnings: Vec<String>,
}

impl TrainMetrics {
    pub fn first_loss(&self) -> Option<f64> {
        self.epoch_losses.first().map(|e| e.total)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.epoch_losses.last().map(|e| e.total)
    }
}

/// Draws `round(fraction * maskable)` distinct masked positions (at least
/// one) from the maskable positions, returned sorted.
pub(crate) fn sample_mask(
    maskable: &[usize],
    fraction: f64,
    rng: &mut impl Rng,
) -> Vec<usize> {
    if maskable.is_empty() {
        return Vec::new();
    }
    let want = ((fraction * maskable.len() as f64).round() as usize)
        .max(1)
        .min(maskable.len());
    let mut pool = maskable.to_vec();
    for k in 0..want {
        let j = rng.gen_range(k..pool.len());
        pool.swap(k, j);
    }
    pool.truncate(want);
    pool.sort_unstable();
    pool
}

/// Trains a probe on video/caption pairs. The vocabulary is closed over the
/// given captions; the RNG (init, shuffling, masking) is fully determined
/// by `hp.seed`.
pub fn train_probe(
    examples: &[ProbeExample],
    hp: &ProbeHyperparams,
) -> Result<(ProbeModel, TrainMetrics)> {
    hp.validate()?;
    if examples.is_empty() {
        return Err(Error::Probe("cannot train on an empty example set".into()));
    }
    let video_dim = examples[0].feature.len();
    for (i, ex) in examples.iter().enumerate() {
        if ex.feature.len() != video_dim {
            return Err(Error::Probe(format!(
                "example {i} has feature length {}, expected {video_dim}",
                ex.feature.len()
            )));
        }
    }

    let mut metrics = TrainMetrics::default();
    let degenerate = examples.iter().filter(|e| e.feature.degenerate).count();
    if degenerate > 0 {
        metrics.warnings.push(format!(
            "{degenerate} of {} videos have no detectable object; their motion features are all zero",
            examples.len()
        ));
    }

    let vocab = Vocab::build(examples.iter().map(|e| e.caption.as_str()));
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = ProbeModel::new(video_dim, vocab, hp, &mut rng)?;

    let ids: Vec<Vec<usize>> = examples.iter().map(|e| model.vocab().encode(&e.caption)).collect();
    for (i, seq) in ids.iter().enumerate() {
        if seq.is_empty() {
            return Err(Error::Probe(format!("example {i} has an empty caption")));
        }
    }
    let maskable: Vec<Vec<usize>> = ids.iter().map(|seq| model.vocab().maskable_positions(seq)).collect();

    let mut indices: Vec<usize> = (0..examples.len()).collect();
    let mut saw_skipped_pairing = false;

    for epoch in 0..hp.epochs {
        indices.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0, 0.0); // total, contrastive, matching, mlm
        let mut seen = 0usize;

        for (batch_no, chunk) in indices.chunks(hp.batch_size).enumerate() {
            let feats: Vec<_> = chunk.iter().map(|&i| &examples[i].feature).collect();
            let batch_ids: Vec<Vec<usize>> = chunk.iter().map(|&i| ids[i].clone()).collect();
            let masks: Vec<Vec<usize>> = chunk
                .iter()
                .map(|&i| sample_mask(&maskable[i], hp.mask_fraction, &mut rng))
                .collect();

            let mut grads = model.new_grads();
            let losses = model.forward_backward(&feats, &batch_ids, &masks, false, Some(&mut grads))?;
            if !losses.total.is_finite() || !grads.is_finite() {
                return Err(Error::Probe(format!(
                    "non-finite loss or gradient at epoch {epoch}, batch {batch_no} \
                     (total={}, contrastive={}, matching={}, mlm={}); \
                     try a lower learning_rate or tighter clip_norm",
                    losses.total, losses.contrastive, losses.matching, losses.mlm
                )));
            }
            saw_skipped_pairing |= losses.contrast_skipped;
            model.apply_sgd(&mut grads, hp.learning_rate, hp.clip_norm);

            let w = chunk.len() as f64;
            sums.0 += losses.total * w;
            sums.1 += losses.contrastive * w;
            sums.2 += losses.matching * w;
            sums.3 += losses.mlm * w;
            seen += chunk.len();
        }

        let inv = 1.0 / seen as f64;
        metrics.epoch_losses.push(EpochLoss {
            epoch,
            total: sums.0 * inv,
            contrastive: sums.1 * inv,
            matching: sums.2 * inv,
            mlm: sums.3 * inv,
        });
    }

    if saw_skipped_pairing {
        metrics.warnings.push(
            "some batches contained a single example; the contrastive and matching \
             objectives were skipped for those batches"
                .to_owned(),
        );
    }

    Ok((model, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::eval::{evaluate_retrieval, masked_direction_accuracy};
    use crate::probe::features::{VideoFeature, FEATURES_PER_FRAME};

    /// Hand-built features for a dot drifting horizontally: `dir` is +1
    /// (rightward) or -1 (leftward), `jitter` decorrelates start positions.
    fn drifting_dot(dir: f64, jitter: f64, frames: usize) -> VideoFeature {
        let (w, h) = (224.0, 224.0);
        let speed = 2.0; // px per frame
        let mut values = Vec::with_capacity(frames * FEATURES_PER_FRAME);
        for t in 0..frames {
            let cx = 112.0 + jitter + dir * speed * t as f64;
            let cy = 112.0 - jitter * 0.5;
            let dx = if t == 0 { 0.0 } else { dir * speed };
            values.extend_from_slice(&[
                cx / w,
                cy / h,
                dx / 16.0,
                0.0,
                0.02,
                0.0,
            ]);
        }
        VideoFeature { values, degenerate: false }
    }

    pub(crate) fn synthetic_direction_set(per_class: usize) -> Vec<ProbeExample> {
        let mut examples = Vec::new();
        for i in 0..per_class {
            let jitter = (i as f64 * 3.7) % 20.0 - 10.0;
            examples.push(ProbeExample {
                feature: drifting_dot(1.0, jitter, 8),
                caption: "A dot in the center moves right".to_owned(),
            });
            examples.push(ProbeExample {
                feature: drifting_dot(-1.0, jitter + 1.3, 8),
                caption: "A dot in the center moves left".to_owned(),
            });
        }
        examples
    }

    fn small_hp(seed: u64) -> ProbeHyperparams {
        ProbeHyperparams {
            embed_dim: 16,
            hidden_dim: 24,
            text_embed_dim: 12,
            epochs: 300,
            batch_size: 8,
            learning_rate: 0.2,
            clip_norm: 5.0,
            mask_fraction: 0.2,
            tau_init: 0.07,
            seed,
        }
    }

    #[test]
    fn training_learns_direction_from_synthetic_motion() {
        let examples = synthetic_direction_set(12);
        let (model, metrics) = train_probe(&examples, &small_hp(1)).unwrap();

        let first = metrics.first_loss().unwrap();
        let last = metrics.last_loss().unwrap();
        assert!(last < first * 0.8, "loss barely moved: {first} -> {last}");

        let retrieval = evaluate_retrieval(&model, &examples);
        assert!(retrieval.r1 > 0.8, "text retrieval r1 = {}", retrieval.r1);

        let sighted = masked_direction_accuracy(&model, &examples, false);
        let blind = masked_direction_accuracy(&model, &examples, true);
        assert!(
            sighted > blind,
            "video must add direction information: sighted {sighted} vs blind {blind}"
        );
        assert!(sighted > 0.9, "sighted direction accuracy only {sighted}");
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let examples = synthetic_direction_set(4);
        let mut hp = small_hp(7);
        hp.epochs = 3;
        let (_, a) = train_probe(&examples, &hp).unwrap();
        let (_, b) = train_probe(&examples, &hp).unwrap();
        assert_eq!(a.epoch_losses, b.epoch_losses);

        hp.seed = 8;
        let (_, c) = train_probe(&examples, &hp).unwrap();
        assert_ne!(a.epoch_losses[0], c.epoch_losses[0]);
    }

    #[test]
    fn mask_sampling_is_sorted_distinct_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let maskable = vec![0, 2, 3, 5, 6, 9];
        for _ in 0..100 {
            let mask = sample_mask(&maskable, 0.4, &mut rng);
            assert!(!mask.is_empty() && mask.len() <= maskable.len());
            assert!(mask.windows(2).all(|w| w[0] < w[1]), "not sorted/distinct: {mask:?}");
            assert!(mask.iter().all(|p| maskable.contains(p)));
            assert_eq!(mask.len(), 2); // round(0.4 * 6)
        }
        assert!(sample_mask(&[], 0.5, &mut rng).is_empty());
        assert_eq!(sample_mask(&[4], 0.01, &mut rng), vec![4]); // at least one
    }

    #[test]
    fn mismatched_feature_lengths_are_rejected() {
        let mut examples = synthetic_direction_set(2);
        examples[1].feature.values.truncate(FEATURES_PER_FRAME);
        let err = train_probe(&examples, &small_hp(0)).unwrap_err();
        assert!(err.to_string().contains("feature length"));
    }

    #[test]
    fn degenerate_videos_are_reported_not_fatal() {
        let mut examples = synthetic_direction_set(2);
        examples[0].feature.values.iter_mut().for_each(|v| *v = 0.0);
        examples[0].feature.degenerate = true;
        let mut hp = small_hp(0);
        hp.epochs = 1;
        let (_, metrics) = train_probe(&examples, &hp).unwrap();
        assert!(metrics.warnings.iter().any(|w| w.contains("no detectable object")));
    }

    #[test]
    fn single_example_trains_mlm_only_with_warning() {
        let examples = synthetic_direction_set(1)[..1].to_vec();
        let mut hp = small_hp(0);
        hp.epochs = 2;
        let (_, metrics) = train_probe(&examples, &hp).unwrap();
        assert!(metrics.warnings.iter().any(|w| w.contains("single example")));
        assert!(metrics.epoch_losses[0].contrastive == 0.0);
        assert!(metrics.epoch_losses[0].mlm > 0.0);
    }
}
