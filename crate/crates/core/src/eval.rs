//! Metrics over predictions and per-word aspect scores.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::MultiMask;
use crate::text::Document;

/// Per-word aspect scores of one document, row-major `[L, T]`; column `a`
/// holds aspect `a + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordAspectScores {
    pub len: usize,
    pub num_targets: usize,
    pub scores: Vec<f64>,
}

impl WordAspectScores {
    pub fn new(len: usize, num_targets: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != len * num_targets {
            return Err(CoreError::Schema(format!(
                "{} scores cannot form [{len}, {num_targets}]",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(CoreError::Schema(format!("word scores must be finite and non-negative, got {bad}")));
        }
        Ok(WordAspectScores {
            len,
            num_targets,
            scores,
        })
    }

    /// One-hot scores from gold per-token aspects (0 = irrelevant).
    pub fn from_gold(gold: &[usize], num_targets: usize) -> Result<Self> {
        let mut s = vec![0.0; gold.len() * num_targets];
        for (l, &a) in gold.iter().enumerate() {
            if a > num_targets {
                return Err(CoreError::Schema(format!("gold aspect {a} exceeds {num_targets}")));
            }
            if a > 0 {
                s[l * num_targets + a - 1] = 1.0;
            }
        }
        WordAspectScores::new(gold.len(), num_targets, s)
    }

    /// Score of position `l` for 1-based aspect `aspect`.
    pub fn get(&self, l: usize, aspect: usize) -> f64 {
        self.scores[l * self.num_targets + aspect - 1]
    }

    pub fn column(&self, aspect: usize) -> Vec<f64> {
        (0..self.len).map(|l| self.get(l, aspect)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetMode {
    #[default]
    PerDocument,
    CorpusWide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectPrecision {
    pub aspect: usize,
    pub precision: f64,
    pub selected: usize,
    pub correct: usize,
    /// Selected words as a percentage of all evaluated tokens.
    pub highlighted_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub aspects: Vec<AspectPrecision>,
    pub evaluated_docs: usize,
    /// Documents skipped for lacking annotations.
    pub excluded_docs: usize,
}

fn check_aligned(scores: &[WordAspectScores], annotations: &[Option<Vec<usize>>]) -> Result<()> {
    if scores.len() != annotations.len() {
        return Err(CoreError::Schema(format!(
            "{} score records for {} annotation records",
            scores.len(),
            annotations.len()
        )));
    }
    for (s, a) in scores.iter().zip(annotations) {
        if let Some(a) = a {
            if a.len() != s.len {
                return Err(CoreError::Schema(format!(
                    "annotation covers {} tokens, scores cover {}",
                    a.len(),
                    s.len
                )));
            }
        }
    }
    Ok(())
}

/// Indices of the `k` highest values; ties go to the lower index.
fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Precision of top-scoring words against sentence annotations.
///
/// `budgets[a]` is the fraction of tokens to select for aspect `a + 1`. Per
/// document the count is `max(1, floor(fraction · L))`; corpus-wide it is
/// `floor(fraction · total tokens)`.
pub fn rationale_precision(
    scores: &[WordAspectScores],
    annotations: &[Option<Vec<usize>>],
    budgets: &[f64],
    mode: BudgetMode,
) -> Result<PrecisionReport> {
    check_aligned(scores, annotations)?;
    let evaluated: Vec<(&WordAspectScores, &Vec<usize>)> = scores
        .iter()
        .zip(annotations)
        .filter_map(|(s, a)| a.as_ref().map(|a| (s, a)))
        .collect();
    let excluded_docs = scores.len() - evaluated.len();
    if evaluated.is_empty() {
        return Err(CoreError::Empty("no annotated documents to evaluate".into()));
    }
    let t = evaluated[0].0.num_targets;
    if budgets.len() != t {
        return Err(CoreError::Schema(format!("{} budgets for {t} aspects", budgets.len())));
    }
    if let Some(b) = budgets.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
        return Err(CoreError::Param(format!("budget fraction must lie in (0, 1], got {b}")));
    }
    let total_tokens: usize = evaluated.iter().map(|(s, _)| s.len).sum();
    let mut aspects = Vec::with_capacity(t);
    for (ai, &frac) in budgets.iter().enumerate() {
        let aspect = ai + 1;
        let (mut selected, mut correct) = (0usize, 0usize);
        match mode {
            BudgetMode::PerDocument => {
                for (s, ann) in &evaluated {
                    let k = ((frac * s.len as f64).floor() as usize).clamp(1, s.len);
                    for l in top_k(&s.column(aspect), k) {
                        selected += 1;
                        correct += usize::from(ann[l] == aspect);
                    }
                }
            }
            BudgetMode::CorpusWide => {
                let mut pooled = Vec::with_capacity(total_tokens);
                let mut truth = Vec::with_capacity(total_tokens);
                for (s, ann) in &evaluated {
                    pooled.extend(s.column(aspect));
                    truth.extend(ann.iter().map(|&a| a == aspect));
                }
                let k = ((frac * total_tokens as f64).floor() as usize).max(1);
                for i in top_k(&pooled, k) {
                    selected += 1;
                    correct += usize::from(truth[i]);
                }
            }
        }
        aspects.push(AspectPrecision {
            aspect,
            precision: correct as f64 / selected as f64,
            selected,
            correct,
            highlighted_pct: 100.0 * selected as f64 / total_tokens as f64,
        });
    }
    Ok(PrecisionReport {
        aspects,
        evaluated_docs: evaluated.len(),
        excluded_docs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub percentile: usize,
    pub threshold: f64,
    pub selected_fraction: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Nothing was selected; precision is reported as 1.0 by convention.
    pub empty_selection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectCurve {
    pub aspect: usize,
    pub points: Vec<CurvePoint>,
    /// All scores were equal, so only one threshold exists.
    pub degenerate: bool,
}

impl AspectCurve {
    pub fn thresholds(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.threshold).collect()
    }

    pub fn best_f1(&self) -> f64 {
        self.points.iter().map(|p| p.f1).fold(0.0, f64::max)
    }
}

/// Linear-interpolation percentile of sorted data, `p ∈ [0, 100]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Selects words with score `>= threshold` for `aspect` and scores them
/// against the annotations of every annotated document.
pub fn evaluate_threshold(
    scores: &[WordAspectScores],
    annotations: &[Option<Vec<usize>>],
    aspect: usize,
    threshold: f64,
) -> Result<CurvePoint> {
    check_aligned(scores, annotations)?;
    let (mut total, mut selected, mut correct, mut gold) = (0usize, 0usize, 0usize, 0usize);
    for (s, ann) in scores.iter().zip(annotations) {
        let Some(ann) = ann else { continue };
        for (l, &a) in ann.iter().enumerate() {
            let hit = a == aspect;
            let pick = s.get(l, aspect) >= threshold;
            total += 1;
            gold += usize::from(hit);
            selected += usize::from(pick);
            correct += usize::from(hit && pick);
        }
    }
    if total == 0 {
        return Err(CoreError::Empty("no annotated tokens to evaluate".into()));
    }
    let empty_selection = selected == 0;
    let precision = if empty_selection {
        1.0
    } else {
        correct as f64 / selected as f64
    };
    let recall = if gold == 0 { 1.0 } else { correct as f64 / gold as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(CurvePoint {
        percentile: 0,
        threshold,
        selected_fraction: selected as f64 / total as f64,
        precision,
        recall,
        f1,
        empty_selection,
    })
}

/// Precision, recall and F1 at each of the 100 percentiles (0..=99) of every
/// aspect's score distribution over annotated documents.
pub fn percentile_curves(scores: &[WordAspectScores], annotations: &[Option<Vec<usize>>]) -> Result<Vec<AspectCurve>> {
    check_aligned(scores, annotations)?;
    let t = scores
        .first()
        .map(|s| s.num_targets)
        .ok_or_else(|| CoreError::Empty("no score records".into()))?;
    let mut curves = Vec::with_capacity(t);
    for aspect in 1..=t {
        let mut dist: Vec<f64> = scores
            .iter()
            .zip(annotations)
            .filter(|(_, a)| a.is_some())
            .flat_map(|(s, _)| s.column(aspect))
            .collect();
        if dist.is_empty() {
            return Err(CoreError::Empty(format!("no scores for aspect {aspect}")));
        }
        dist.sort_by(f64::total_cmp);
        let degenerate = dist[0] == dist[dist.len() - 1];
        let points = if degenerate {
            log::warn!("aspect {aspect}: constant score distribution, curve has a single point");
            let mut p = evaluate_threshold(scores, annotations, aspect, dist[0])?;
            p.percentile = 0;
            vec![p]
        } else {
            (0..100)
                .map(|p| {
                    let th = percentile(&dist, p as f64);
                    let mut point = evaluate_threshold(scores, annotations, aspect, th)?;
                    point.percentile = p;
                    Ok(point)
                })
                .collect::<Result<Vec<_>>>()?
        };
        curves.push(AspectCurve {
            aspect,
            points,
            degenerate,
        });
    }
    Ok(curves)
}

/// Aspect-conditional word distributions with background removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectWordDistribution {
    /// `P(w | a)` per aspect.
    pub probs: Vec<BTreeMap<String, f64>>,
    /// Mean of `P(w | a)` over aspects.
    pub background: BTreeMap<String, f64>,
    /// `P(w | a) − background(w)`.
    pub adjusted: Vec<BTreeMap<String, f64>>,
}

impl AspectWordDistribution {
    pub fn num_aspects(&self) -> usize {
        self.probs.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.background.len()
    }

    /// Top `n` words of 1-based `aspect` by adjusted probability, ties broken
    /// alphabetically.
    pub fn top_words(&self, aspect: usize, n: usize) -> Vec<(String, f64)> {
        let mut words: Vec<(&String, f64)> = self.adjusted[aspect - 1].iter().map(|(w, p)| (w, *p)).collect();
        words.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        words.into_iter().take(n).map(|(w, p)| (w.clone(), p)).collect()
    }
}

/// Builds `P(w | a)` from score mass: every occurrence of `w` contributes its
/// aspect-`a` score.
pub fn aspect_word_distribution(docs: &[&[String]], scores: &[WordAspectScores]) -> Result<AspectWordDistribution> {
    if docs.len() != scores.len() {
        return Err(CoreError::Schema("documents and scores differ in count".into()));
    }
    let t = scores
        .first()
        .map(|s| s.num_targets)
        .ok_or_else(|| CoreError::Empty("no documents".into()))?;
    let mut mass: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); t];
    for (tokens, s) in docs.iter().zip(scores) {
        if tokens.len() != s.len || s.num_targets != t {
            return Err(CoreError::Schema("score matrix does not match its document".into()));
        }
        for (l, w) in tokens.iter().enumerate() {
            for (a, m) in mass.iter_mut().enumerate() {
                *m.entry(w.clone()).or_insert(0.0) += s.get(l, a + 1);
            }
        }
    }
    let probs: Vec<BTreeMap<String, f64>> = mass
        .into_iter()
        .enumerate()
        .map(|(a, m)| {
            let z: f64 = m.values().sum();
            if z == 0.0 {
                log::warn!("aspect {} received no score mass", a + 1);
            }
            m.into_iter()
                .map(|(w, v)| (w, if z > 0.0 { v / z } else { 0.0 }))
                .collect()
        })
        .collect();
    let background: BTreeMap<String, f64> = probs[0]
        .keys()
        .map(|w| (w.clone(), probs.iter().map(|p| p[w]).sum::<f64>() / t as f64))
        .collect();
    let adjusted = probs
        .iter()
        .map(|p| p.iter().map(|(w, v)| (w.clone(), v - background[w])).collect())
        .collect();
    Ok(AspectWordDistribution {
        probs,
        background,
        adjusted,
    })
}

/// Smoothing used when a pair never co-occurs or a word is absent.
pub const NPMI_EPS: f64 = 1e-12;

/// Document-level occurrence sets for co-occurrence probabilities.
#[derive(Debug, Clone, Default)]
pub struct Cooccurrence {
    num_docs: usize,
    docs_of: HashMap<String, Vec<u32>>,
}

impl Cooccurrence {
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut docs_of: HashMap<String, Vec<u32>> = HashMap::new();
        let mut num_docs = 0;
        for (i, tokens) in docs.into_iter().enumerate() {
            num_docs += 1;
            for w in tokens {
                let list = docs_of.entry(w.clone()).or_default();
                if list.last() != Some(&(i as u32)) {
                    list.push(i as u32);
                }
            }
        }
        Cooccurrence { num_docs, docs_of }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn prob(&self, w: &str) -> f64 {
        self.docs_of.get(w).map_or(0.0, |d| d.len() as f64 / self.num_docs as f64)
    }

    pub fn joint(&self, a: &str, b: &str) -> f64 {
        let (Some(x), Some(y)) = (self.docs_of.get(a), self.docs_of.get(b)) else {
            return 0.0;
        };
        let (mut i, mut j, mut n) = (0, 0, 0usize);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n as f64 / self.num_docs as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Npmi {
    /// Sum of pair terms.
    pub raw: f64,
    /// `raw` divided by the number of pairs.
    pub normalized: f64,
    /// Words missing from the reference documents.
    pub absent: Vec<String>,
}

/// NPMI of one word pair from marginal and joint probabilities.
pub fn npmi_term(p_j: f64, p_k: f64, p_jk: f64) -> f64 {
    if p_jk >= 1.0 {
        return 1.0;
    }
    let p_jk = if p_jk > 0.0 { p_jk } else { NPMI_EPS };
    let p_j = p_j.max(NPMI_EPS);
    let p_k = p_k.max(NPMI_EPS);
    ((p_jk / (p_j * p_k)).ln() / -p_jk.ln()).clamp(-1.0, 1.0)
}

/// Coherence of a ranked word list: sum over pairs `k < j` of their NPMI.
pub fn npmi(words: &[String], stats: &Cooccurrence) -> Result<Npmi> {
    let n = words.len();
    if n < 2 {
        return Err(CoreError::Param(format!("npmi needs at least two words, got {n}")));
    }
    if stats.num_docs() == 0 {
        return Err(CoreError::Empty("no reference documents".into()));
    }
    let absent: Vec<String> = words.iter().filter(|w| stats.prob(w) == 0.0).cloned().collect();
    let mut raw = 0.0;
    for j in 1..n {
        for k in 0..j {
            raw += npmi_term(stats.prob(&words[j]), stats.prob(&words[k]), stats.joint(&words[j], &words[k]));
        }
    }
    Ok(Npmi {
        raw,
        normalized: raw / (n * (n - 1) / 2) as f64,
        absent,
    })
}

pub const COHERENCE_NS: [usize; 6] = [5, 10, 15, 20, 25, 30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// Effective list sizes after capping at the vocabulary size.
    pub ns: Vec<usize>,
    /// `[aspect][n]` pair-normalized NPMI.
    pub per_aspect: Vec<Vec<f64>>,
    /// `[aspect][n]` raw pair sums.
    pub per_aspect_raw: Vec<Vec<f64>>,
    pub per_n: Vec<f64>,
    pub mean: f64,
    pub warnings: Vec<String>,
}

pub fn coherence_report(dist: &AspectWordDistribution, stats: &Cooccurrence, ns: &[usize]) -> Result<CoherenceReport> {
    let vocab = dist.vocabulary_size();
    let mut warnings = Vec::new();
    let mut eff = Vec::with_capacity(ns.len());
    for &n in ns {
        if n > vocab {
            let msg = format!("top-{n} exceeds vocabulary of {vocab} words; capped");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        eff.push(n.min(vocab));
    }
    if eff.iter().any(|&n| n < 2) {
        return Err(CoreError::Empty(format!("vocabulary of {vocab} words is too small for coherence")));
    }
    let mut per_aspect = Vec::new();
    let mut per_aspect_raw = Vec::new();
    for a in 1..=dist.num_aspects() {
        let mut row = Vec::new();
        let mut raw_row = Vec::new();
        for &n in &eff {
            let words: Vec<String> = dist.top_words(a, n).into_iter().map(|(w, _)| w).collect();
            let v = npmi(&words, stats)?;
            if !v.absent.is_empty() {
                warnings.push(format!("aspect {a}: words absent from reference corpus: {}", v.absent.join(" ")));
            }
            row.push(v.normalized);
            raw_row.push(v.raw);
        }
        per_aspect.push(row);
        per_aspect_raw.push(raw_row);
    }
    let per_n: Vec<f64> = (0..eff.len())
        .map(|i| per_aspect.iter().map(|r| r[i]).sum::<f64>() / per_aspect.len() as f64)
        .collect();
    let mean = per_n.iter().sum::<f64>() / per_n.len() as f64;
    Ok(CoherenceReport {
        ns: eff,
        per_aspect,
        per_aspect_raw,
        per_n,
        mean,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Variant {
    /// Mean of the two class-wise F1 scores.
    #[default]
    ClassMacro,
    /// F1 of the positive class only.
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    /// Mean over aspects, in percent.
    pub macro_f1: f64,
    pub per_aspect: Vec<f64>,
}

fn class_f1(preds: &[u8], labels: &[u8], class: u8) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &y) in preds.iter().zip(labels) {
        match (p == class, y == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Per-aspect and macro F1 in percent. `preds[n][a]` and `labels[n][a]` are
/// binary.
pub fn macro_f1(preds: &[Vec<u8>], labels: &[Vec<u8>], variant: F1Variant) -> Result<F1Report> {
    if preds.is_empty() {
        return Err(CoreError::Empty("no predictions to score".into()));
    }
    if preds.len() != labels.len() {
        return Err(CoreError::Schema(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let t = labels[0].len();
    if preds.iter().chain(labels).any(|r| r.len() != t) {
        return Err(CoreError::Schema("ragged prediction or label rows".into()));
    }
    let per_aspect: Vec<f64> = (0..t)
        .map(|a| {
            let p: Vec<u8> = preds.iter().map(|r| r[a]).collect();
            let y: Vec<u8> = labels.iter().map(|r| r[a]).collect();
            100.0
                * match variant {
                    F1Variant::ClassMacro => (class_f1(&p, &y, 0) + class_f1(&p, &y, 1)) / 2.0,
                    F1Variant::Positive => class_f1(&p, &y, 1),
                }
        })
        .collect();
    Ok(F1Report {
        macro_f1: per_aspect.iter().sum::<f64>() / t as f64,
        per_aspect,
    })
}

/// Changes of winning aspect between consecutive relevant words. Label 0
/// (irrelevant) is transparent: `a, 0, a` is not a switch.
pub fn aspect_switch_count(labels: &[usize]) -> usize {
    let mut last = None;
    let mut switches = 0;
    for &a in labels.iter().filter(|&&a| a != 0) {
        if last.is_some_and(|l| l != a) {
            switches += 1;
        }
        last = Some(a);
    }
    switches
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Winning column per row of a mask, 0 meaning irrelevant.
pub fn mask_labels(mask: &MultiMask) -> Vec<usize> {
    mask.rows().map(argmax).collect()
}

/// Winning 1-based aspect per word of a score matrix without an irrelevant
/// column.
pub fn score_labels(scores: &WordAspectScores) -> Vec<usize> {
    scores.scores.chunks(scores.num_targets).map(|r| argmax(r) + 1).collect()
}

/// Score export with one `doc_id,position,aspect_index,score` row per word
/// and aspect.
pub fn scores_to_csv(ids: &[&str], scores: &[WordAspectScores]) -> String {
    let mut out = String::from("doc_id,position,aspect_index,score\n");
    for (id, s) in ids.iter().zip(scores) {
        for l in 0..s.len {
            for a in 1..=s.num_targets {
                out.push_str(&format!("{id},{l},{a},{}\n", s.get(l, a)));
            }
        }
    }
    out
}

/// Parses a score export, keeping documents in order of first appearance.
pub fn parse_scores_csv(source: &str, content: &str) -> Result<Vec<(String, WordAspectScores)>> {
    let parse_err = |line: usize, msg: String| CoreError::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, BTreeMap<(usize, usize), f64>> = HashMap::new();
    for (i, line) in content.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() || (n == 1 && line.starts_with("doc_id")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(parse_err(n, format!("expected 4 fields, got {}", f.len())));
        }
        let pos: usize = f[1].parse().map_err(|e| parse_err(n, format!("position: {e}")))?;
        let aspect: usize = f[2].parse().map_err(|e| parse_err(n, format!("aspect_index: {e}")))?;
        let score: f64 = f[3].parse().map_err(|e| parse_err(n, format!("score: {e}")))?;
        if aspect == 0 {
            return Err(parse_err(n, "aspect_index is 1-based".into()));
        }
        if !cells.contains_key(f[0]) {
            order.push(f[0].to_string());
        }
        cells.entry(f[0].to_string()).or_default().insert((pos, aspect), score);
    }
    order
        .into_iter()
        .map(|id| {
            let c = &cells[&id];
            let len = c.keys().map(|k| k.0).max().unwrap_or(0) + 1;
            let t = c.keys().map(|k| k.1).max().unwrap_or(0);
            if c.len() != len * t {
                return Err(CoreError::Schema(format!("document {id}: incomplete score grid")));
            }
            let scores = c.values().copied().collect();
            Ok((id.clone(), WordAspectScores::new(len, t, scores)?))
        })
        .collect()
}

/// Token annotations of each document, `None` when unannotated.
pub fn annotations_of<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Vec<Option<Vec<usize>>> {
    docs.into_iter().map(Document::token_annotations).collect()
}
