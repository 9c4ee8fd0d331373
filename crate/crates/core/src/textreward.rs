//! ROUGE-L recall and the unlearning reward `1 - ROUGE-L`.
//!
//! Text is tokenized by lowercasing, splitting on unicode whitespace and
//! stripping the characters `. , ! ? ; : " '` from both ends of each token.
//! Tokens that are pure punctuation disappear.

use std::fmt;

use crate::error::{invalid, Result};

const STRIP: &[char] = &['.', ',', '!', '?', ';', ':', '"', '\''];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokenize(text: &str) -> Self {
        Self(
            text.split_whitespace()
                .map(|t| t.to_lowercase().trim_matches(STRIP).to_string())
                .filter(|t| !t.is_empty())
                .collect(),
        )
    }

    /// Wraps pre-split tokens; tokens must not contain whitespace.
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.iter().any(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(invalid("tokens must be non-empty and free of whitespace"));
        }
        Ok(Self(tokens))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) memory.
pub fn lcs_length(a: &TokenSequence, b: &TokenSequence) -> usize {
    let w = b.0.len() + 1;
    // two DP rows; short references stay on the stack
    if w <= 32 {
        lcs_rows(&a.0, &b.0, &mut [0usize; 64][..2 * w])
    } else {
        lcs_rows(&a.0, &b.0, &mut vec![0usize; 2 * w])
    }
}

fn lcs_rows(a: &[String], b: &[String], rows: &mut [usize]) -> usize {
    let (mut prev, mut cur) = rows.split_at_mut(b.len() + 1);
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if same_token(x, y) {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

// Tokens are short; an inlined byte loop beats a memcmp call here.
#[inline]
fn same_token(x: &str, y: &str) -> bool {
    x.len() == y.len() && x.bytes().zip(y.bytes()).all(|(p, q)| p == q)
}

/// `lcs(candidate, reference) / |reference|`.
pub fn rouge_l_recall(candidate: &TokenSequence, reference: &TokenSequence) -> Result<f64> {
    if reference.is_empty() {
        return Err(invalid("ROUGE-L reference is empty"));
    }
    Ok(lcs_length(candidate, reference) as f64 / reference.len() as f64)
}

/// Reward for steering away from the ground truth, in `[0, 1]`.
pub fn unlearn_reward(candidate: &TokenSequence, ground_truth: &TokenSequence) -> Result<f64> {
    Ok(1.0 - rouge_l_recall(candidate, ground_truth)?)
}
