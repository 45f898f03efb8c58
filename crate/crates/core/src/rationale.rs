//! Turning masks into word-level rationales.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::eval::{argmax, AspectCurve};
use crate::model::MultiMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordAssignment {
    /// Winning target, 0 when the irrelevant target wins.
    pub aspect: usize,
    /// Probability of the winning target.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub aspect: usize,
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationale {
    pub num_targets: usize,
    pub words: Vec<WordAssignment>,
    /// Maximal runs of words won by the same target, in position order.
    pub spans: Vec<Span>,
}

impl Rationale {
    pub fn spans_for(&self, aspect: usize) -> impl Iterator<Item = &Span> {
        self.spans.iter().filter(move |s| s.aspect == aspect)
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

/// Assigns each word to its most probable target (ties to the lower index)
/// and merges consecutive same-target words into spans.
pub fn extract(mask: &MultiMask) -> Rationale {
    let words: Vec<WordAssignment> = mask
        .rows()
        .map(|r| {
            let a = argmax(r);
            WordAssignment {
                aspect: a,
                confidence: r[a],
            }
        })
        .collect();
    let mut spans: Vec<Span> = Vec::new();
    let mut start = 0;
    for l in 1..=words.len() {
        if l == words.len() || words[l].aspect != words[start].aspect {
            let aspect = words[start].aspect;
            if aspect != 0 {
                let conf = words[start..l].iter().map(|w| w.confidence).sum::<f64>() / (l - start) as f64;
                spans.push(Span {
                    aspect,
                    start,
                    end: l,
                    confidence: conf,
                });
            }
            start = l;
        }
    }
    Rationale {
        num_targets: mask.num_targets,
        words,
        spans,
    }
}

/// Positions whose aspect probability reaches the `p`-th percentile threshold
/// of `aspect` in `table`; a percentile past the table selects nothing.
pub fn extract_thresholded(mask: &MultiMask, aspect: usize, p: usize, table: Option<&[AspectCurve]>) -> Result<Vec<usize>> {
    let table = table.ok_or_else(|| CoreError::Contract("thresholded extraction needs a percentile table".into()))?;
    if aspect == 0 || aspect > mask.num_targets {
        return Err(CoreError::Contract(format!("aspect {aspect} outside 1..={}", mask.num_targets)));
    }
    let curve = table
        .iter()
        .find(|c| c.aspect == aspect)
        .ok_or_else(|| CoreError::Contract(format!("percentile table lacks aspect {aspect}")))?;
    let threshold = curve.points.get(p).map_or(f64::INFINITY, |pt| pt.threshold);
    Ok(mask
        .sub_mask(aspect)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= threshold)
        .map(|(l, _)| l)
        .collect())
}
