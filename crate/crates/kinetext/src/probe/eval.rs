//! Probe evaluation: caption retrieval from video (recall at 1/5/10) and
//! masked direction-word recovery, with a video-blind variant that zeroes
//! the video embedding to measure how much of the signal the video carries.

use crate::analytics::tokenize;

use super::features::ProbeExample;
use super::model::{ProbeModel, MASK_ID};

/// Direction words whose recovery the masked-prediction metric measures.
const DIRECTION_WORDS: [&str; 4] = ["upwards", "right", "downwards", "left"];

/// Words that can immediately precede a *movement* direction. "left"/"right"
/// also occur inside position phrases ("in the left") and rotation clauses
/// ("rotating left"); their predecessors ("the", "rotating") are not listed
/// here, which excludes those uses.
const DIRECTION_LEADERS: [&str; 4] = ["moves", "quickly", "slowly", "diagonally"];

/// Recall@k over a retrieval run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalMetrics {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    /// Mean of the three recalls.
    pub avg: f64,
    /// Candidate pool size (= number of examples).
    pub candidates: usize,
}

/// Computes recalls from a score matrix. `scores[q][c]` ranks candidate `c`
/// for query `q` (higher is better, ties broken toward the lower index);
/// `correct[q][c]` marks the candidates that count as hits for `q` — a
/// query scores at k if any hit ranks within the top k.
pub fn recalls_from_scores(scores: &[Vec<f64>], correct: &[Vec<bool>]) -> RetrievalMetrics {
    assert_eq!(scores.len(), correct.len());
    let queries = scores.len();
    if queries == 0 {
        return RetrievalMetrics { r1: 0.0, r5: 0.0, r10: 0.0, avg: 0.0, candidates: 0 };
    }
    let candidates = scores[0].len();
    let (mut hit1, mut hit5, mut hit10) = (0usize, 0usize, 0usize);
    let mut order: Vec<usize> = Vec::with_capacity(candidates);
    for (row, ok) in scores.iter().zip(correct) {
        assert_eq!(row.len(), candidates);
        assert_eq!(ok.len(), candidates);
        order.clear();
        order.extend(0..candidates);
        order.sort_by(|&a, &b| {
            row[b].partial_cmp(&row[a]).expect("finite scores").then(a.cmp(&b))
        });
        let best_rank = order.iter().position(|&c| ok[c]);
        if let Some(rank) = best_rank {
            if rank < 1 {
                hit1 += 1;
            }
            if rank < 5 {
                hit5 += 1;
            }
            if rank < 10 {
                hit10 += 1;
            }
        }
    }
    let q = queries as f64;
    let (r1, r5, r10) = (hit1 as f64 / q, hit5 as f64 / q, hit10 as f64 / q);
    RetrievalMetrics { r1, r5, r10, avg: (r1 + r5 + r10) / 3.0, candidates }
}

/// Text-from-video retrieval over the example set: every example's caption
/// is a candidate, every video a query, scored by the matching head. A
/// retrieved caption counts as correct when its text equals the query
/// video's own caption (duplicated captions are all correct).
pub fn evaluate_retrieval(model: &ProbeModel, examples: &[ProbeExample]) -> RetrievalMetrics {
    if examples.is_empty() {
        return RetrievalMetrics { r1: 0.0, r5: 0.0, r10: 0.0, avg: 0.0, candidates: 0 };
    }
    let zvs: Vec<Vec<f64>> = examples.iter().map(|e| model.encode_video(&e.feature)).collect();
    let zts: Vec<Vec<f64>> = examples
        .iter()
        .map(|e| model.encode_text(&model.vocab().encode(&e.caption)))
        .collect();
    let scores: Vec<Vec<f64>> = zvs
        .iter()
        .map(|zv| zts.iter().map(|zt| model.matching_logit(zv, zt)).collect())
        .collect();
    let correct: Vec<Vec<bool>> = examples
        .iter()
        .map(|q| examples.iter().map(|c| c.caption == q.caption).collect())
        .collect();
    recalls_from_scores(&scores, &correct)
}

/// Positions of movement-direction words in a tokenized caption: the token
/// must be a direction word and its predecessor one of the movement leaders,
/// which excludes position phrases ("in the left") and rotation clauses
/// ("rotating left").
pub fn direction_token_positions(tokens: &[String]) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(i, tok)| {
            DIRECTION_WORDS.contains(&tok.as_str())
                && DIRECTION_LEADERS.contains(&tokens[i - 1].as_str())
        })
        .map(|(i, _)| i)
        .collect()
}

/// Masks each movement-direction word (one at a time) and scores the
/// model's argmax recovery of it. With `video_blind` the video embedding is
/// zeroed, so the model can only fall back on caption statistics — the gap
/// between the two runs is the direction information carried by the video.
/// Returns the fraction recovered, or 0.0 when no direction words exist.
pub fn masked_direction_accuracy(
    model: &ProbeModel,
    examples: &[ProbeExample],
    video_blind: bool,
) -> f64 {
    let mut total = 0usize;
    let mut correct = 0usize;
    for ex in examples {
        let tokens = tokenize(&ex.caption);
        let ids = model.vocab().encode(&ex.caption);
        debug_assert_eq!(tokens.len(), ids.len());
        for pos in direction_token_positions(&tokens) {
            let mut masked = ids.clone();
            masked[pos] = MASK_ID;
            let feature = if video_blind { None } else { Some(&ex.feature) };
            let predicted = model.predict_masked(feature, &masked);
            total += 1;
            if predicted == ids[pos] {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return 0.0;
    }
    correct as f64 / total as f64
}
