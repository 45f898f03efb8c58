//! Subsampling a corpus until its aspect labels are weakly correlated.

use std::collections::BTreeMap;

use mtm_autodiff::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::text::{Corpus, Document, SplitRatios};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecorrelationConfig {
    /// 1-based aspects to retain, in output order; empty keeps all.
    pub keep_aspects: Vec<usize>,
    /// Mean pairwise Pearson correlation to reach.
    pub target: f64,
    /// Never keep fewer than this fraction of documents.
    pub min_keep_fraction: f64,
    pub seed: u64,
    pub split: SplitRatios,
}

impl Default for DecorrelationConfig {
    fn default() -> Self {
        DecorrelationConfig {
            keep_aspects: Vec::new(),
            target: 0.30,
            min_keep_fraction: 0.1,
            seed: 0,
            split: SplitRatios::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationReport {
    pub initial_correlation: f64,
    pub achieved_correlation: f64,
    pub target: f64,
    pub target_met: bool,
    pub kept_docs: usize,
    pub removed_docs: usize,
}

/// Mean pairwise correlation of binary columns from label-pattern counts.
fn pattern_correlation(counts: &BTreeMap<Vec<u8>, usize>, k: usize) -> f64 {
    if k < 2 {
        return 0.0;
    }
    let n: usize = counts.values().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let mut ones = vec![0.0; k];
    let mut both = vec![vec![0.0; k]; k];
    for (pat, &c) in counts {
        let c = c as f64;
        for i in 0..k {
            if pat[i] == 1 {
                ones[i] += c;
                for j in i + 1..k {
                    if pat[j] == 1 {
                        both[i][j] += c;
                    }
                }
            }
        }
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..k {
        for j in i + 1..k {
            let (pi, pj) = (ones[i] / n, ones[j] / n);
            let var = pi * (1.0 - pi) * pj * (1.0 - pj);
            if var > 0.0 {
                sum += (both[i][j] / n - pi * pj) / var.sqrt();
            }
            pairs += 1;
        }
    }
    sum / pairs as f64
}

fn has_constant_column(counts: &BTreeMap<Vec<u8>, usize>, k: usize) -> bool {
    (0..k).any(|i| {
        let ones: usize = counts.iter().filter(|(p, _)| p[i] == 1).map(|(_, c)| c).sum();
        let total: usize = counts.values().sum();
        ones == 0 || ones == total
    })
}

fn restrict(doc: &Document, keep: &[usize]) -> Document {
    let remap = |a: usize| keep.iter().position(|&k| k == a).map_or(0, |p| p + 1);
    Document {
        labels: keep.iter().map(|&a| doc.labels[a - 1]).collect(),
        raw_ratings: doc.raw_ratings.as_ref().map(|r| keep.iter().map(|&a| r[a - 1]).collect()),
        sentence_aspects: doc
            .sentence_aspects
            .as_ref()
            .map(|s| s.iter().map(|&a| if a == 0 { 0 } else { remap(a) }).collect()),
        gold_word_aspects: doc
            .gold_word_aspects
            .as_ref()
            .map(|g| g.iter().map(|&a| if a == 0 { 0 } else { remap(a) }).collect()),
        ..doc.clone()
    }
}

/// Greedily drops documents from the label pattern whose removal lowers the
/// mean pairwise correlation most, until the target is met or no removal
/// helps. Label columns are never made constant. The result is re-split.
pub fn decorrelate(corpus: &Corpus, cfg: &DecorrelationConfig) -> Result<(Corpus, DecorrelationReport)> {
    let t = corpus.num_targets();
    let keep: Vec<usize> = if cfg.keep_aspects.is_empty() {
        (1..=t).collect()
    } else {
        cfg.keep_aspects.clone()
    };
    if keep.iter().any(|&a| a == 0 || a > t) || {
        let mut s = keep.clone();
        s.sort_unstable();
        s.dedup();
        s.len() != keep.len()
    } {
        return Err(CoreError::Param(format!("keep_aspects {keep:?} must be distinct values in 1..={t}")));
    }
    if !(0.0..=1.0).contains(&cfg.min_keep_fraction) {
        return Err(CoreError::Param("min_keep_fraction must lie in [0, 1]".into()));
    }
    let k = keep.len();
    let n = corpus.documents.len();
    let min_keep = ((cfg.min_keep_fraction * n as f64).ceil() as usize).max(2);

    let mut groups: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for (i, d) in corpus.documents.iter().enumerate() {
        let pat: Vec<u8> = keep.iter().map(|&a| d.labels[a - 1]).collect();
        groups.entry(pat).or_default().push(i);
    }
    let mut rng = Rng::new(cfg.seed).fork(0xDEC0);
    for members in groups.values_mut() {
        rng.shuffle(members);
    }
    let mut counts: BTreeMap<Vec<u8>, usize> = groups.iter().map(|(p, m)| (p.clone(), m.len())).collect();
    let initial = pattern_correlation(&counts, k);
    let mut current = initial;
    let mut kept: usize = n;

    while current > cfg.target && kept > min_keep {
        let mut best: Option<(f64, Vec<u8>)> = None;
        for (pat, &c) in &counts {
            if c == 0 {
                continue;
            }
            let mut trial = counts.clone();
            *trial.get_mut(pat).expect("pattern present") -= 1;
            if has_constant_column(&trial, k) {
                continue;
            }
            let r = pattern_correlation(&trial, k);
            if r < current - 1e-12 && best.as_ref().map_or(true, |b| r < b.0) {
                best = Some((r, pat.clone()));
            }
        }
        let Some((r, pat)) = best else { break };
        *counts.get_mut(&pat).expect("pattern present") -= 1;
        current = r;
        kept -= 1;
    }

    let target_met = current <= cfg.target;
    if !target_met {
        log::warn!(
            "decorrelation target {:.3} unreachable; best achieved {:.3} with {kept} documents",
            cfg.target,
            current
        );
    }
    let mut selected: Vec<usize> = groups
        .iter()
        .flat_map(|(pat, members)| members[..counts[pat]].iter().copied())
        .collect();
    selected.sort_unstable();
    let documents: Vec<Document> = selected.iter().map(|&i| restrict(&corpus.documents[i], &keep)).collect();
    let mut out = Corpus {
        aspect_names: keep.iter().map(|&a| corpus.aspect_names[a - 1].clone()).collect(),
        splits: Vec::new(),
        documents,
    };
    out.resplit(cfg.seed, cfg.split);
    let report = DecorrelationReport {
        initial_correlation: initial,
        achieved_correlation: current,
        target: cfg.target,
        target_met,
        kept_docs: kept,
        removed_docs: n - kept,
    };
    Ok((out, report))
}
