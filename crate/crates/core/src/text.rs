//! Corpus ingestion: tokenization, documents, splits, vocabulary, embeddings
//! and batching.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use mtm_autodiff::{Rng, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::io::{read_to_string, write_atomic};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const DEFAULT_MIN_COUNT: usize = 2;
pub const DEFAULT_MAX_LEN: usize = 256;

/// Lowercases and splits on whitespace and punctuation. Punctuation characters
/// become single-character tokens; apostrophes inside a word are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let inner_apostrophe = c == '\''
            && !cur.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || inner_apostrophe {
            cur.extend(c.to_lowercase());
        } else {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Splits after every `.`, `!` or `?` token. The spans partition `[0, len)`.
pub fn sentence_spans(tokens: &[String]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if matches!(t.as_str(), "." | "!" | "?") {
            spans.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < tokens.len() {
        spans.push((start, tokens.len()));
    }
    spans
}

/// Ratings of three stars and above are positive.
pub fn binarize(rating: f64) -> Result<u8> {
    if !(1.0..=5.0).contains(&rating) {
        return Err(CoreError::Param(format!("rating {rating} outside [1, 5]")));
    }
    Ok(u8::from(rating >= 3.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    /// Binary sentiment per target, in aspect order.
    pub labels: Vec<u8>,
    pub raw_ratings: Option<Vec<f64>>,
    pub sentence_spans: Vec<(usize, usize)>,
    /// One entry per sentence: the annotated aspect (1-based) or 0 for none.
    pub sentence_aspects: Option<Vec<usize>>,
    /// Per-token aspect (1-based) or 0 for irrelevant words. Synthetic corpora only.
    pub gold_word_aspects: Option<Vec<usize>>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Aspect annotated on the sentence containing each token (0 when none).
    pub fn token_annotations(&self) -> Option<Vec<usize>> {
        let aspects = self.sentence_aspects.as_ref()?;
        let mut out = vec![0; self.len()];
        for (&(s, e), &a) in self.sentence_spans.iter().zip(aspects) {
            out[s..e].iter_mut().for_each(|v| *v = a);
        }
        Some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            valid: 0.1,
        }
    }
}

/// Seeded shuffle, then the first `train` fraction is train, the next `valid`
/// fraction is validation and the remainder is test.
pub fn assign_splits(n: usize, seed: u64, ratios: SplitRatios) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).fork(0x5911).shuffle(&mut order);
    let n_train = (ratios.train * n as f64).round() as usize;
    let n_valid = ((ratios.valid * n as f64).round() as usize).min(n - n_train.min(n));
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    splits
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub aspect_names: Vec<String>,
    pub documents: Vec<Document>,
    pub splits: Vec<Split>,
}

impl Corpus {
    pub fn num_targets(&self) -> usize {
        self.aspect_names.len()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Document> {
        self.documents
            .iter()
            .zip(&self.splits)
            .filter(move |(_, s)| **s == split)
            .map(|(d, _)| d)
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.documents.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    pub fn resplit(&mut self, seed: u64, ratios: SplitRatios) {
        self.splits = assign_splits(self.documents.len(), seed, ratios);
    }

    /// Checks the structural invariants every corpus must satisfy.
    pub fn validate(&self) -> Result<()> {
        let t = self.num_targets();
        if self.splits.len() != self.documents.len() {
            return Err(CoreError::Schema("split tags do not cover every document".into()));
        }
        for d in &self.documents {
            if d.labels.len() != t {
                return Err(CoreError::Schema(format!(
                    "document {} has {} labels, corpus has {t} targets",
                    d.id,
                    d.labels.len()
                )));
            }
            let mut pos = 0;
            for &(s, e) in &d.sentence_spans {
                if s != pos || e <= s {
                    return Err(CoreError::Schema(format!("document {}: sentence spans do not partition the tokens", d.id)));
                }
                pos = e;
            }
            if pos != d.len() {
                return Err(CoreError::Schema(format!("document {}: sentence spans do not cover the tokens", d.id)));
            }
            if let Some(sa) = &d.sentence_aspects {
                if sa.len() != d.sentence_spans.len() || sa.iter().any(|a| *a > t) {
                    return Err(CoreError::Schema(format!("document {}: bad sentence aspects", d.id)));
                }
            }
            if let Some(g) = &d.gold_word_aspects {
                if g.len() != d.len() || g.iter().any(|a| *a > t) {
                    return Err(CoreError::Schema(format!("document {}: bad gold word aspects", d.id)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    text: String,
    ratings: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentence_aspects: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_word_aspects: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Aspect names; defaults to `aspect1..aspectT`.
    pub aspect_names: Option<Vec<String>>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

pub fn default_aspect_names(t: usize) -> Vec<String> {
    (1..=t).map(|i| format!("aspect{i}")).collect()
}

/// Parses line-delimited JSON records (`id`, `text`, `ratings`, optional
/// `sentence_aspects` and `gold_word_aspects`). Blank lines are skipped.
pub fn parse_corpus(source: &str, content: &str, opts: &LoadOptions) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut t: Option<usize> = opts.aspect_names.as_ref().map(Vec::len);
    for (lineno, line) in content.lines().enumerate() {
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| CoreError::Parse {
            path: source.to_string(),
            line: line_no,
            msg,
        };
        let rec: Record = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let tokens = tokenize(&rec.text);
        if tokens.is_empty() {
            return Err(err(format!("document {} has empty text", rec.id)));
        }
        match t {
            None => t = Some(rec.ratings.len()),
            Some(t) if t != rec.ratings.len() => {
                return Err(CoreError::Schema(format!(
                    "{source}:{line_no}: document {} has {} ratings, expected {t}",
                    rec.id,
                    rec.ratings.len()
                )))
            }
            _ => {}
        }
        let labels = rec
            .ratings
            .iter()
            .map(|r| binarize(*r))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| err(e.to_string()))?;
        let spans = sentence_spans(&tokens);
        if let Some(sa) = &rec.sentence_aspects {
            if sa.len() != spans.len() {
                return Err(err(format!(
                    "{} sentence aspects for {} sentences",
                    sa.len(),
                    spans.len()
                )));
            }
        }
        if let Some(g) = &rec.gold_word_aspects {
            if g.len() != tokens.len() {
                return Err(err(format!("{} gold aspects for {} tokens", g.len(), tokens.len())));
            }
        }
        documents.push(Document {
            id: rec.id,
            tokens,
            labels,
            raw_ratings: Some(rec.ratings),
            sentence_spans: spans,
            sentence_aspects: rec.sentence_aspects,
            gold_word_aspects: rec.gold_word_aspects,
        });
    }
    let t = t.ok_or_else(|| CoreError::Empty(format!("{source}: no documents")))?;
    let aspect_names = opts.aspect_names.clone().unwrap_or_else(|| default_aspect_names(t));
    let splits = assign_splits(documents.len(), opts.seed, opts.ratios);
    let corpus = Corpus {
        aspect_names,
        documents,
        splits,
    };
    corpus.validate()?;
    Ok(corpus)
}

pub fn load_corpus(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Corpus> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    parse_corpus(&path.display().to_string(), &content, opts)
}

pub fn corpus_to_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    for d in &corpus.documents {
        let ratings = d.raw_ratings.clone().unwrap_or_else(|| {
            d.labels
                .iter()
                .map(|l| if *l == 1 { 5.0 } else { 1.0 })
                .collect()
        });
        let rec = Record {
            id: d.id.clone(),
            text: d.tokens.join(" "),
            ratings,
            sentence_aspects: d.sentence_aspects.clone(),
            gold_word_aspects: d.gold_word_aspects.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, corpus_to_jsonl(corpus).as_bytes())
}

/// `id,sentence_index,aspect_index` triples for every annotated sentence.
pub fn annotations_to_csv(corpus: &Corpus) -> String {
    let mut out = String::from("id,sentence_index,aspect_index\n");
    for d in &corpus.documents {
        if let Some(sa) = &d.sentence_aspects {
            for (s, &a) in sa.iter().enumerate() {
                if a > 0 {
                    let _ = writeln!(out, "{},{},{}", d.id, s, a);
                }
            }
        }
    }
    out
}

/// Replaces sentence annotations from an annotation file. Documents listed in
/// the file get every unlisted sentence marked 0; others lose annotations.
pub fn apply_annotations(corpus: &mut Corpus, source: &str, content: &str) -> Result<()> {
    let index: HashMap<String, usize> = corpus
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.clone(), i))
        .collect();
    let t = corpus.num_targets();
    let mut fresh: Vec<Option<Vec<usize>>> = vec![None; corpus.documents.len()];
    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("id")) {
            continue;
        }
        let err = |msg: String| CoreError::Parse {
            path: source.to_string(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [id, sent, aspect] = fields.as_slice() else {
            return Err(err(format!("expected 3 fields, got {}", fields.len())));
        };
        let doc = *index.get(*id).ok_or_else(|| err(format!("unknown document id {id}")))?;
        let sent: usize = sent.parse().map_err(|_| err(format!("bad sentence index {sent}")))?;
        let aspect: usize = aspect.parse().map_err(|_| err(format!("bad aspect index {aspect}")))?;
        let n_sent = corpus.documents[doc].sentence_spans.len();
        if sent >= n_sent {
            return Err(err(format!("sentence {sent} out of range for {n_sent} sentences")));
        }
        if aspect == 0 || aspect > t {
            return Err(err(format!("aspect {aspect} outside 1..={t}")));
        }
        let slot = fresh[doc].get_or_insert_with(|| vec![0; n_sent]);
        if slot[sent] != 0 && slot[sent] != aspect {
            return Err(err(format!("sentence {sent} of {id} annotated twice")));
        }
        slot[sent] = aspect;
    }
    for (d, f) in corpus.documents.iter_mut().zip(fresh) {
        d.sentence_aspects = f;
    }
    Ok(())
}

/// Word index with `<pad>` at 0 and `<unk>` at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < 2 || words[PAD] != PAD_TOKEN || words[UNK] != UNK_TOKEN {
            return Err(CoreError::Schema("vocabulary must start with <pad>, <unk>".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(CoreError::Schema(format!("duplicate vocabulary word {w}")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    /// Words occurring at least `min_count` times in the training split,
    /// ordered by frequency then lexicographically.
    pub fn build(corpus: &Corpus, min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for d in corpus.split(Split::Train) {
            for t in &d.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count && *w != PAD_TOKEN && *w != UNK_TOKEN)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut words = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        words.extend(entries.into_iter().map(|(w, _)| w.to_string()));
        Vocabulary::from_words(words).expect("built vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 2
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// `[|V|, d]` embedding matrix aligned with a vocabulary.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.matrix.shape[1]
    }

    pub fn rows(&self) -> usize {
        self.matrix.shape[0]
    }

    pub fn row(&self, id: usize) -> &[f64] {
        let d = self.dim();
        &self.matrix.data[id * d..(id + 1) * d]
    }

    /// Every row drawn from `U(-0.1, 0.1)` except the zero PAD row.
    pub fn random(vocab: &Vocabulary, dim: usize, seed: u64) -> Self {
        EmbeddingTable::random_bounded(vocab, dim, 0.1, seed)
    }

    /// Every row drawn from `U(-bound, bound)` except the zero PAD row.
    pub fn random_bounded(vocab: &Vocabulary, dim: usize, bound: f64, seed: u64) -> Self {
        let mut rng = Rng::new(seed).fork(0xE3B);
        let mut data = vec![0.0; vocab.len() * dim];
        for v in data.iter_mut().skip(dim) {
            *v = rng.uniform_range(-bound, bound);
        }
        EmbeddingTable {
            matrix: Tensor::new(vec![vocab.len(), dim], data).expect("shape matches"),
        }
    }
}

/// Reads `word v1 … vd` lines, with an optional leading `count dim` header.
/// Words missing from the file get seeded `U(-0.1, 0.1)` rows; PAD is zero.
pub fn parse_embeddings(source: &str, content: &str, vocab: &Vocabulary, seed: u64) -> Result<EmbeddingTable> {
    let mut dim: Option<usize> = None;
    let mut found: HashMap<usize, Vec<f64>> = HashMap::new();
    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| CoreError::Parse {
            path: source.to_string(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if lineno == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            dim = Some(fields[1].parse().expect("checked"));
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| err(format!("bad number {f}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite embedding value".into()));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(err(format!("dimension {} differs from {d}", values.len())))
            }
            _ => {}
        }
        if values.is_empty() {
            return Err(err("embedding line without values".into()));
        }
        if let Some(&id) = vocab.index.get(fields[0]) {
            found.insert(id, values);
        }
    }
    let dim = dim.ok_or_else(|| CoreError::Empty(format!("{source}: no embeddings")))?;
    let mut table = EmbeddingTable::random(vocab, dim, seed);
    for (id, values) in found {
        if id != PAD {
            table.matrix.data[id * dim..(id + 1) * dim].copy_from_slice(&values);
        }
    }
    Ok(table)
}

pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary, seed: u64) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    parse_embeddings(&path.display().to_string(), &content, vocab, seed)
}

/// Rectangular PAD-filled token ids and the matching validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub ids: Vec<Vec<usize>>,
    pub valid: Vec<Vec<bool>>,
}

impl PaddedBatch {
    pub fn width(&self) -> usize {
        self.ids.first().map_or(0, Vec::len)
    }
}

/// Pads to the longest sequence, truncating anything beyond `max_len`.
pub fn pad_batch(docs: &[Vec<usize>], max_len: usize) -> Result<PaddedBatch> {
    if docs.is_empty() {
        return Err(CoreError::Empty("pad_batch needs at least one document".into()));
    }
    let width = docs.iter().map(|d| d.len().min(max_len)).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(docs.len());
    let mut valid = Vec::with_capacity(docs.len());
    for d in docs {
        let n = d.len().min(max_len);
        let mut row = d[..n].to_vec();
        row.resize(width, PAD);
        let mut mask = vec![true; n];
        mask.resize(width, false);
        ids.push(row);
        valid.push(mask);
    }
    Ok(PaddedBatch { ids, valid })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_of(texts: &[&str]) -> Corpus {
        let content: String = texts
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{{\"id\":\"d{i}\",\"text\":\"{t}\",\"ratings\":[4,2]}}\n"))
            .collect();
        let mut c = parse_corpus("mem", &content, &LoadOptions::default()).unwrap();
        c.splits = vec![Split::Train; c.documents.len()];
        c
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("Great head, DON'T drink it!"),
            vec!["great", "head", ",", "don't", "drink", "it", "!"]
        );
        assert_eq!(tokenize("  "), Vec::<String>::new());
    }

    #[test]
    fn sentences_partition_tokens() {
        let toks = tokenize("a b. c ! d");
        assert_eq!(sentence_spans(&toks), vec![(0, 3), (3, 5), (5, 6)]);
    }

    #[test]
    fn binarize_threshold() {
        assert_eq!(binarize(3.0).unwrap(), 1);
        assert_eq!(binarize(2.5).unwrap(), 0);
        assert_eq!(binarize(5.0).unwrap(), 1);
        assert!(binarize(0.0).is_err());
        assert!(binarize(5.5).is_err());
    }

    #[test]
    fn load_binarizes_and_rejects_bad_records() {
        let c = parse_corpus(
            "mem",
            "{\"id\":\"a\",\"text\":\"x y\",\"ratings\":[4,2,3,5]}\n",
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(c.documents[0].labels, vec![1, 0, 1, 1]);

        let empty = parse_corpus("mem", "{\"id\":\"a\",\"text\":\"\",\"ratings\":[4]}\n", &LoadOptions::default());
        assert!(matches!(empty, Err(CoreError::Parse { line: 1, .. })));

        let bad = parse_corpus(
            "mem",
            "{\"id\":\"a\",\"text\":\"x\",\"ratings\":[4]}\nnot json\n",
            &LoadOptions::default(),
        );
        assert!(matches!(bad, Err(CoreError::Parse { line: 2, .. })));

        let inconsistent = parse_corpus(
            "mem",
            "{\"id\":\"a\",\"text\":\"x\",\"ratings\":[4]}\n{\"id\":\"b\",\"text\":\"x\",\"ratings\":[4,1]}\n",
            &LoadOptions::default(),
        );
        assert!(matches!(inconsistent, Err(CoreError::Schema(_))));
    }

    #[test]
    fn splits_are_seeded_and_proportional() {
        let a = assign_splits(1000, 3, SplitRatios::default());
        let b = assign_splits(1000, 3, SplitRatios::default());
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|s| **s == Split::Train).count(), 800);
        assert_eq!(a.iter().filter(|s| **s == Split::Valid).count(), 100);
        assert_ne!(a, assign_splits(1000, 4, SplitRatios::default()));
    }

    #[test]
    fn vocab_ordering_and_min_count() {
        let c = corpus_of(&["b a a c", "a b d"]);
        let v = Vocabulary::build(&c, 1);
        assert_eq!(&v.words()[2..], &["a", "b", "c", "d"]);
        let v2 = Vocabulary::build(&c, 2);
        assert_eq!(&v2.words()[2..], &["a", "b"]);
        assert_eq!(v2.id("zzz"), UNK);
        assert_eq!(Vocabulary::build(&c, 100).len(), 2);
    }

    #[test]
    fn embeddings_copy_seed_and_pad() {
        let c = corpus_of(&["the cat the cat"]);
        let v = Vocabulary::build(&c, 1);
        let e = parse_embeddings("mem", "the 0.1 0.2\n", &v, 9).unwrap();
        assert_eq!(e.row(v.id("the")), &[0.1, 0.2]);
        assert_eq!(e.row(PAD), &[0.0, 0.0]);
        let cat = e.row(v.id("cat")).to_vec();
        assert!(cat.iter().all(|x| x.abs() < 0.1));
        let again = parse_embeddings("mem", "2 2\nthe 0.1 0.2\n", &v, 9).unwrap();
        assert_eq!(again.row(v.id("cat")), cat.as_slice());
        assert!(parse_embeddings("mem", "the 0.1 0.2\ncat 0.3\n", &v, 9).is_err());
    }

    #[test]
    fn padding_and_truncation() {
        let b = pad_batch(&[vec![5, 6, 7], vec![5, 6, 7, 8, 9]], 256).unwrap();
        assert_eq!(b.width(), 5);
        assert_eq!(b.valid[0], vec![true, true, true, false, false]);
        assert!(b.valid[1].iter().all(|v| *v));
        assert_eq!(b.ids[0][3], PAD);
        let single = pad_batch(&[vec![4, 4]], 256).unwrap();
        assert_eq!(single.ids, vec![vec![4, 4]]);
        let cut = pad_batch(&[vec![1, 2, 3, 4]], 2).unwrap();
        assert_eq!(cut.ids, vec![vec![1, 2]]);
        assert_eq!(cut.valid, vec![vec![true, true]]);
        assert!(pad_batch(&[], 4).is_err());
    }

    #[test]
    fn annotations_round_trip() {
        let mut c = corpus_of(&["a b . c d .", "e ."]);
        apply_annotations(&mut c, "mem", "id,sentence_index,aspect_index\nd0,1,2\n").unwrap();
        assert_eq!(c.documents[0].sentence_aspects, Some(vec![0, 2]));
        assert_eq!(c.documents[1].sentence_aspects, None);
        assert_eq!(c.documents[0].token_annotations().unwrap(), vec![0, 0, 0, 2, 2, 2]);
        let csv = annotations_to_csv(&c);
        let mut c2 = c.clone();
        apply_annotations(&mut c2, "mem", &csv).unwrap();
        assert_eq!(c, c2);
        assert!(apply_annotations(&mut c2, "mem", "d0,5,1\n").is_err());
    }
}
