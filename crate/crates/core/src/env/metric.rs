use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// How an answer is compared with the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    TokenF1,
    BinarySuccess,
    /// Partial credit reported by the planner backend itself.
    RewardScore,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::TokenF1 => "token_f1",
            MetricKind::BinarySuccess => "binary_success",
            MetricKind::RewardScore => "reward_score",
        })
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "token_f1" | "f1" => Ok(MetricKind::TokenF1),
            "binary_success" | "success" => Ok(MetricKind::BinarySuccess),
            "reward_score" | "reward" => Ok(MetricKind::RewardScore),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// Scores `predicted` against `truth`. `RewardScore` has no backend credit
/// here and falls back to normalized exact match; use [`score_with_reward`]
/// to pass the credit through.
pub fn score(metric: MetricKind, predicted: &str, truth: &str) -> f64 {
    score_with_reward(metric, predicted, truth, None)
}

pub fn score_with_reward(metric: MetricKind, predicted: &str, truth: &str, reward: Option<f64>) -> f64 {
    match metric {
        MetricKind::TokenF1 => token_f1(predicted, truth),
        MetricKind::BinarySuccess => exact_match(predicted, truth),
        MetricKind::RewardScore => match reward {
            Some(r) if r.is_finite() => r.clamp(0.0, 1.0),
            _ => exact_match(predicted, truth),
        },
    }
}

/// Lowercase, drop punctuation and the articles a/an/the, squeeze spaces.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String =
        text.to_lowercase().chars().map(|c| if c.is_ascii_punctuation() { ' ' } else { c }).collect();
    lowered.split_whitespace().filter(|w| !matches!(*w, "a" | "an" | "the")).collect::<Vec<_>>().join(" ")
}

fn exact_match(predicted: &str, truth: &str) -> f64 {
    if normalize_answer(predicted) == normalize_answer(truth) && !predicted.trim().is_empty() {
        1.0
    } else {
        0.0
    }
}

pub fn token_f1(predicted: &str, truth: &str) -> f64 {
    let p = normalize_answer(predicted);
    let t = normalize_answer(truth);
    let p_tokens: Vec<&str> = p.split_whitespace().collect();
    let t_tokens: Vec<&str> = t.split_whitespace().collect();
    if p_tokens.is_empty() || t_tokens.is_empty() {
        return if p_tokens == t_tokens && !predicted.trim().is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in &t_tokens {
        *counts.entry(tok).or_default() += 1;
    }
    let mut common = 0usize;
    for tok in &p_tokens {
        if let Some(c) = counts.get_mut(tok) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p_tokens.len() as f64;
    let recall = common as f64 / t_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_partial_overlap() {
        let f = token_f1("Penelope Spheeris was older", "Penelope Spheeris");
        assert!((f - 2.0 * (0.5 * 1.0) / 1.5).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint() {
        for m in [MetricKind::TokenF1, MetricKind::BinarySuccess, MetricKind::RewardScore] {
            assert_eq!(score(m, "Los Angeles", "Los Angeles"), 1.0);
            assert_eq!(score(m, "Paris", "Los Angeles"), 0.0);
            assert_eq!(score(m, "", "Los Angeles"), 0.0);
        }
    }

    #[test]
    fn normalization_ignores_case_articles_and_punctuation() {
        assert_eq!(normalize_answer("The  Big, Apple!"), "big apple");
        assert_eq!(score(MetricKind::BinarySuccess, "the yes.", "Yes"), 1.0);
    }

    #[test]
    fn reward_passes_through_and_clamps() {
        assert_eq!(score_with_reward(MetricKind::RewardScore, "x", "y", Some(0.25)), 0.25);
        assert_eq!(score_with_reward(MetricKind::RewardScore, "x", "y", Some(3.0)), 1.0);
        assert_eq!(score_with_reward(MetricKind::TokenF1, "x", "y", Some(1.0)), 0.0);
    }

    #[test]
    fn metric_names_parse() {
        assert_eq!("token_f1".parse::<MetricKind>().unwrap(), MetricKind::TokenF1);
        assert!("bleu".parse::<MetricKind>().is_err());
    }
}
