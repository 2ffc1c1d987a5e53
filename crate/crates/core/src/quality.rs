//! Response quality against a reference model: ROUGE-L and embedding STS.
//!
//! ROUGE-L here is the sentence-level F1 (β = 1) over the longest common
//! subsequence of tokens. Tokens are lowercased whitespace runs with leading
//! and trailing punctuation stripped; absolute scores depend on this rule.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::word_count;
use crate::endpoint::{Embedder, EndpointError};
use crate::runner::RunRecord;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine undefined for a zero vector")]
    ZeroVector,
    #[error("cannot score an empty string")]
    EmptyText,
    #[error("embedding failed: {0}")]
    Embedding(#[from] EndpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub prompt_id: String,
    pub cell_key: String,
    pub rouge_l: f64,
    pub sts: f64,
    pub reference_word_len: usize,
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201c}'
                | '\u{201d}'
                | '\u{2026}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{00ab}'
                | '\u{00bb}'
        )
}

/// ROUGE tokenization: lowercase, split on whitespace, trim punctuation from
/// both ends, drop tokens left empty.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(is_punct).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Length of the longest common subsequence, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sentence-level ROUGE-L F1 in `[0, 1]`. Zero when either side has no tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = rouge_tokens(candidate);
    let r = rouge_tokens(reference);
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / c.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

/// Cosine similarity clamped to `[-1, 1]`; values within a few ulps of ±1
/// are reported as exactly ±1.
pub fn cosine<T: Float>(a: &[T], b: &[T]) -> Result<T, QualityError> {
    if a.len() != b.len() {
        return Err(QualityError::DimensionMismatch(a.len(), b.len()));
    }
    let (dot, na, nb) = a
        .iter()
        .zip(b)
        .fold((T::zero(), T::zero(), T::zero()), |(d, x, y), (&p, &q)| {
            (d + p * q, x + p * p, y + q * q)
        });
    if na == T::zero() || nb == T::zero() {
        return Err(QualityError::ZeroVector);
    }
    let c = dot / (na.sqrt() * nb.sqrt());
    let tol = T::epsilon() * T::from(4).unwrap();
    if (T::one() - c.abs()) <= tol {
        return Ok(T::one().copysign(c));
    }
    Ok(c.max(-T::one()).min(T::one()))
}

/// Cosine of the two texts' embeddings.
pub fn sts(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<f64, QualityError> {
    if candidate.trim().is_empty() || reference.trim().is_empty() {
        return Err(QualityError::EmptyText);
    }
    let a = embedder.embed(candidate)?;
    let b = embedder.embed(reference)?;
    cosine(&a, &b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFailure {
    pub cell_key: String,
    pub prompt_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreOutcome {
    /// In run-store order.
    pub scores: Vec<QualityScores>,
    pub skipped_no_reference: usize,
    pub failures: Vec<ScoreFailure>,
}

/// Default cap on concurrent embedding requests.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Scores every run that has a reference. Embedding calls fan out over at most
/// `max_in_flight` threads; output order follows `runs`.
pub fn score_store(
    runs: &[RunRecord],
    references: &HashMap<String, String>,
    embedder: &dyn Embedder,
    max_in_flight: usize,
) -> ScoreOutcome {
    let jobs: Vec<(&RunRecord, &str)> = runs
        .iter()
        .filter_map(|r| references.get(&r.prompt_id).map(|t| (r, t.as_str())))
        .collect();
    let skipped_no_reference = runs.len() - jobs.len();

    let results: Mutex<Vec<Option<Result<QualityScores, String>>>> =
        Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = max_in_flight.max(1).min(jobs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(run, reference)) = jobs.get(i) else {
                    break;
                };
                let scored = sts(&run.response_text, reference, embedder)
                    .map(|sts| QualityScores {
                        prompt_id: run.prompt_id.clone(),
                        cell_key: run.cell_key.clone(),
                        rouge_l: rouge_l(&run.response_text, reference),
                        sts,
                        reference_word_len: word_count(reference),
                    })
                    .map_err(|e| e.to_string());
                results.lock().expect("results poisoned")[i] = Some(scored);
            });
        }
    });

    let mut outcome = ScoreOutcome {
        skipped_no_reference,
        ..Default::default()
    };
    for ((run, _), result) in jobs
        .iter()
        .zip(results.into_inner().expect("results poisoned"))
    {
        match result.expect("every job ran") {
            Ok(score) => outcome.scores.push(score),
            Err(error) => {
                log::warn!(
                    "{}: cannot score `{}`: {error}",
                    run.cell_key,
                    run.prompt_id
                );
                outcome.failures.push(ScoreFailure {
                    cell_key: run.cell_key.clone(),
                    prompt_id: run.prompt_id.clone(),
                    error,
                });
            }
        }
    }
    outcome
}
