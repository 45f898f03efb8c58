//! Synthetic multi-aspect reviews with known rationale words.
//!
//! Every document contains one sentence per aspect, built from that aspect's
//! content words and one sentiment word whose polarity matches the aspect's
//! label, padded with shared stopwords. Optional filler sentences use neutral
//! words only. Because aspect vocabularies are disjoint, the generator knows
//! exactly which words justify each label.

use mtm_autodiff::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::text::{assign_splits, sentence_spans, Corpus, Document, SplitRatios};

const BEER: [(&str, [&str; 12], [&str; 5], [&str; 5]); 4] = [
    (
        "appearance",
        [
            "color", "head", "foam", "lacing", "hue", "clarity", "pour", "amber", "body", "glassware",
            "bubbles", "tint",
        ],
        ["golden", "brilliant", "radiant", "gleaming", "vivid"],
        ["murky", "dull", "muddy", "faded", "cloudy"],
    ),
    (
        "smell",
        [
            "aroma", "nose", "scent", "bouquet", "whiff", "hops", "fragrance", "perfume", "yeast", "esters",
            "spice", "malt",
        ],
        ["fragrant", "floral", "fruity", "aromatic", "perfumed"],
        ["musty", "stale", "skunky", "rancid", "moldy"],
    ),
    (
        "palate",
        [
            "mouthfeel", "texture", "carbonation", "finish", "feel", "tongue", "weight", "fizz", "sip",
            "swallow", "creaminess", "grip",
        ],
        ["silky", "smooth", "velvety", "crisp", "creamy"],
        ["thin", "watery", "flat", "harsh", "gritty"],
    ),
    (
        "taste",
        [
            "flavor", "taste", "sweetness", "bitterness", "aftertaste", "caramel", "citrus", "toffee",
            "coffee", "chocolate", "grain", "profile",
        ],
        ["delicious", "tasty", "rich", "balanced", "luscious"],
        ["bland", "sour", "burnt", "metallic", "insipid"],
    ),
];

const STOPWORDS: [&str; 16] = [
    "the", "a", "it", "is", "was", "and", "this", "with", "of", "very", "quite", "really", "so", "that",
    "has", "its",
];

const NEUTRAL: [&str; 16] = [
    "i", "had", "bottle", "bar", "friend", "night", "store", "bought", "shared", "weekend", "label",
    "brewery", "tried", "last", "at", "from",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectLexicon {
    pub name: String,
    pub content: Vec<String>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl AspectLexicon {
    /// All words generated on behalf of this aspect.
    pub fn words(&self) -> impl Iterator<Item = &String> {
        self.content.iter().chain(&self.positive).chain(&self.negative)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words().any(|w| w == word)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub aspects: Vec<AspectLexicon>,
    pub stopwords: Vec<String>,
    pub neutral: Vec<String>,
}

impl Lexicon {
    /// Beer-style word lists for up to four aspects, procedural ones after that.
    pub fn standard(t: usize) -> Self {
        let strs = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let aspects = (0..t)
            .map(|i| match BEER.get(i) {
                Some((name, content, pos, neg)) => AspectLexicon {
                    name: name.to_string(),
                    content: strs(content),
                    positive: strs(pos),
                    negative: strs(neg),
                },
                None => {
                    let a = i + 1;
                    AspectLexicon {
                        name: format!("aspect{a}"),
                        content: (0..12).map(|k| format!("a{a}c{k}")).collect(),
                        positive: (0..5).map(|k| format!("a{a}pos{k}")).collect(),
                        negative: (0..5).map(|k| format!("a{a}neg{k}")).collect(),
                    }
                }
            })
            .collect();
        Lexicon {
            aspects,
            stopwords: strs(&STOPWORDS),
            neutral: strs(&NEUTRAL),
        }
    }

    /// +1 for positive sentiment words and the first half of each content
    /// vocabulary, -1 for their counterparts, 0 for words outside aspects.
    pub fn polarity(&self, word: &str) -> f64 {
        for a in &self.aspects {
            let half = a.content.len() / 2;
            if a.positive.iter().chain(&a.content[..half]).any(|w| w == word) {
                return 1.0;
            }
            if a.negative.iter().chain(&a.content[half..]).any(|w| w == word) {
                return -1.0;
            }
        }
        0.0
    }

    /// Every word the generator can emit, apart from the full stop.
    pub fn all_words(&self) -> Vec<&String> {
        self.stopwords
            .iter()
            .chain(&self.neutral)
            .chain(self.aspects.iter().flat_map(AspectLexicon::words))
            .collect()
    }

    /// Aspect (1-based) that generated `word`, or 0.
    pub fn aspect_of(&self, word: &str) -> usize {
        self.aspects
            .iter()
            .position(|a| a.contains(word))
            .map_or(0, |i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_targets: usize,
    pub num_docs: usize,
    /// Probability that an aspect copies the shared latent label.
    pub rho: f64,
    /// Inclusive range of content words per aspect sentence.
    pub content_words: (usize, usize),
    /// Probability that a content word comes from the half of the aspect
    /// vocabulary matching the label (0.5 makes content words uninformative).
    pub content_polarity: f64,
    /// Inclusive range of stopwords in each gap of an aspect sentence.
    pub stopword_gap: (usize, usize),
    /// Inclusive range of neutral filler sentences per document.
    pub filler_sentences: (usize, usize),
    /// Inclusive range of filler sentence lengths, excluding the full stop.
    pub filler_len: (usize, usize),
    pub seed: u64,
    pub split: SplitRatios,
    pub embedding: EmbeddingSpec,
}

/// Geometry of the synthetic word vectors. Words of one aspect share a
/// centroid; sentiment words and the polar halves of content vocabularies
/// lean along one polarity direction shared by all aspects; every word adds
/// its own `U(-noise, noise)` offset. Stopwords and filler words are noise
/// alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub dim: usize,
    pub polarity_weight: f64,
    pub noise: f64,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec {
            dim: 16,
            polarity_weight: 0.7,
            noise: 0.6,
        }
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_targets: 4,
            num_docs: 5000,
            rho: 0.7,
            content_words: (1, 1),
            content_polarity: 0.5,
            stopword_gap: (1, 2),
            filler_sentences: (0, 2),
            filler_len: (4, 7),
            seed: 0,
            split: SplitRatios::default(),
            embedding: EmbeddingSpec::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (usize, usize)| lo <= hi;
        if !(0.0..=1.0).contains(&self.rho) || self.rho.is_nan() {
            return Err(CoreError::Param(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.content_polarity) || self.content_polarity.is_nan() {
            return Err(CoreError::Param(format!(
                "content_polarity must lie in [0, 1], got {}",
                self.content_polarity
            )));
        }
        if self.num_targets == 0 {
            return Err(CoreError::Param("num_targets must be at least 1".into()));
        }
        if self.num_docs == 0 {
            return Err(CoreError::Param("num_docs must be at least 1".into()));
        }
        for (name, r) in [
            ("content_words", self.content_words),
            ("stopword_gap", self.stopword_gap),
            ("filler_sentences", self.filler_sentences),
            ("filler_len", self.filler_len),
        ] {
            if !range_ok(r) {
                return Err(CoreError::Param(format!("{name}: lower bound exceeds upper bound")));
            }
        }
        let e = &self.embedding;
        if e.dim == 0 {
            return Err(CoreError::Param("embedding.dim must be positive".into()));
        }
        if !(e.polarity_weight >= 0.0 && e.noise >= 0.0 && e.polarity_weight.is_finite() && e.noise.is_finite()) {
            return Err(CoreError::Param("embedding weights must be finite and non-negative".into()));
        }
        if self.filler_len.0 == 0 {
            return Err(CoreError::Param("filler_len: need at least one word".into()));
        }
        Ok(())
    }

    pub fn lexicon(&self) -> Lexicon {
        Lexicon::standard(self.num_targets)
    }
}

fn draw(rng: &mut Rng, (lo, hi): (usize, usize)) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// Word vectors for the lexicon of `spec`, in [`Lexicon::all_words`] order.
pub fn synthetic_embeddings(spec: &SynthSpec) -> Vec<(String, Vec<f64>)> {
    let lex = spec.lexicon();
    let e = &spec.embedding;
    let mut rng = Rng::new(spec.seed).fork(0xE4B);
    let draw = |rng: &mut Rng, scale: f64| (0..e.dim).map(|_| rng.uniform_range(-scale, scale)).collect::<Vec<f64>>();
    let polarity = draw(&mut rng, 1.0);
    let centroids: Vec<Vec<f64>> = lex.aspects.iter().map(|_| draw(&mut rng, 1.0)).collect();
    lex.all_words()
        .into_iter()
        .map(|w| {
            let mut v = draw(&mut rng, e.noise);
            let a = lex.aspect_of(w);
            if a > 0 {
                let s = lex.polarity(w) * e.polarity_weight;
                for (k, x) in v.iter_mut().enumerate() {
                    *x += centroids[a - 1][k] + s * polarity[k];
                }
            }
            (w.clone(), v)
        })
        .collect()
}

/// Text embedding format with a `count dim` header.
pub fn embeddings_to_text(vectors: &[(String, Vec<f64>)]) -> String {
    let dim = vectors.first().map_or(0, |(_, v)| v.len());
    let mut out = format!("{} {dim}\n", vectors.len());
    for (w, v) in vectors {
        out.push_str(w);
        for x in v {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

/// Labels with pairwise correlation `rho²`: each aspect copies a shared fair
/// coin with probability `rho`, otherwise flips its own.
pub fn correlated_labels(rng: &mut Rng, t: usize, rho: f64) -> Vec<u8> {
    let shared = u8::from(rng.bernoulli(0.5));
    (0..t)
        .map(|_| {
            if rng.bernoulli(rho) {
                shared
            } else {
                u8::from(rng.bernoulli(0.5))
            }
        })
        .collect()
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let lex = spec.lexicon();
    let t = spec.num_targets;
    let mut rng = Rng::new(spec.seed).fork(0x5EED);
    let mut documents = Vec::with_capacity(spec.num_docs);
    for n in 0..spec.num_docs {
        let labels = correlated_labels(&mut rng, t, spec.rho);
        let ratings: Vec<f64> = labels
            .iter()
            .map(|&y| {
                if y == 1 {
                    3.0 + rng.below(3) as f64
                } else {
                    1.0 + rng.below(2) as f64
                }
            })
            .collect();

        // Each sentence is a list of (word, gold aspect); the second element of
        // the outer tuple is the sentence annotation.
        let mut sentences: Vec<(Vec<(String, usize)>, usize)> = Vec::new();
        for (a, al) in lex.aspects.iter().enumerate() {
            let aspect = a + 1;
            let mut s = Vec::new();
            let stops = |rng: &mut Rng, s: &mut Vec<(String, usize)>, k: usize| {
                for _ in 0..k {
                    s.push((rng.choose(&lex.stopwords).clone(), 0));
                }
            };
            let gap = draw(&mut rng, spec.stopword_gap);
            stops(&mut rng, &mut s, gap);
            let half = al.content.len() / 2;
            for _ in 0..draw(&mut rng, spec.content_words) {
                let positive_half = rng.bernoulli(spec.content_polarity) == (labels[a] == 1);
                let pool = if positive_half { &al.content[..half] } else { &al.content[half..] };
                s.push((rng.choose(pool).clone(), aspect));
            }
            let lexicon = if labels[a] == 1 { &al.positive } else { &al.negative };
            s.push((rng.choose(lexicon).clone(), aspect));
            let gap = draw(&mut rng, spec.stopword_gap);
            stops(&mut rng, &mut s, gap);
            s.push((".".to_string(), 0));
            sentences.push((s, aspect));
        }
        for _ in 0..draw(&mut rng, spec.filler_sentences) {
            let mut s: Vec<(String, usize)> = (0..draw(&mut rng, spec.filler_len))
                .map(|_| {
                    let pool = if rng.bernoulli(0.5) { &lex.neutral } else { &lex.stopwords };
                    (rng.choose(pool).clone(), 0)
                })
                .collect();
            s.push((".".to_string(), 0));
            sentences.push((s, 0));
        }
        rng.shuffle(&mut sentences);

        let mut tokens = Vec::new();
        let mut gold = Vec::new();
        let mut sentence_aspects = Vec::new();
        for (s, aspect) in sentences {
            sentence_aspects.push(aspect);
            for (w, g) in s {
                tokens.push(w);
                gold.push(g);
            }
        }
        let spans = sentence_spans(&tokens);
        debug_assert_eq!(spans.len(), sentence_aspects.len());
        documents.push(Document {
            id: format!("syn{n:06}"),
            tokens,
            labels,
            raw_ratings: Some(ratings),
            sentence_spans: spans,
            sentence_aspects: Some(sentence_aspects),
            gold_word_aspects: Some(gold),
        });
    }
    let splits = assign_splits(documents.len(), spec.seed, spec.split);
    let corpus = Corpus {
        aspect_names: lex.aspects.iter().map(|a| a.name.clone()).collect(),
        documents,
        splits,
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Pearson correlation of two binary columns; 0 when either is constant.
pub fn pearson(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ma = a.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
    let mb = b.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (f64::from(x) - ma, f64::from(y) - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Mean Pearson correlation over all aspect pairs of a label matrix
/// (documents × aspects).
pub fn mean_pairwise_correlation(labels: &[Vec<u8>]) -> f64 {
    let t = labels.first().map_or(0, Vec::len);
    if t < 2 {
        return 0.0;
    }
    let cols: Vec<Vec<u8>> = (0..t).map(|j| labels.iter().map(|r| r[j]).collect()).collect();
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..t {
        for j in i + 1..t {
            sum += pearson(&cols[i], &cols[j]);
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// Fraction of tokens that the generator attributed to aspect `aspect`
/// (1-based), pooled over `docs`.
pub fn aspect_word_density<'a>(docs: impl IntoIterator<Item = &'a Document>, aspect: usize) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for d in docs {
        if let Some(g) = &d.gold_word_aspects {
            hit += g.iter().filter(|a| **a == aspect).count();
            total += g.len();
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(rho: f64, n: usize) -> SynthSpec {
        SynthSpec {
            num_docs: n,
            rho,
            seed: 11,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn lexicons_are_disjoint() {
        for t in [1, 4, 6] {
            let lex = Lexicon::standard(t);
            let mut seen = std::collections::HashSet::new();
            for a in &lex.aspects {
                for w in a.words() {
                    assert!(seen.insert(w.clone()), "{w} repeated");
                    assert!(!lex.stopwords.contains(w) && !lex.neutral.contains(w));
                }
            }
        }
    }

    #[test]
    fn rho_one_gives_identical_labels() {
        let c = generate_synthetic(&small(1.0, 300)).unwrap();
        assert!(c.documents.iter().all(|d| d.labels.iter().all(|l| *l == d.labels[0])));
        let labels: Vec<Vec<u8>> = c.documents.iter().map(|d| d.labels.clone()).collect();
        assert!((mean_pairwise_correlation(&labels) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn words_come_from_their_aspect_lexicon() {
        let spec = small(0.5, 200);
        let lex = spec.lexicon();
        let c = generate_synthetic(&spec).unwrap();
        for d in &c.documents {
            let gold = d.gold_word_aspects.as_ref().unwrap();
            for (w, &g) in d.tokens.iter().zip(gold) {
                assert_eq!(lex.aspect_of(w), g, "{w}");
            }
            let ann = d.token_annotations().unwrap();
            for (g, a) in gold.iter().zip(&ann) {
                if *g > 0 {
                    assert_eq!(g, a);
                }
            }
        }
    }

    #[test]
    fn sentiment_word_matches_label() {
        let spec = small(0.3, 100);
        let lex = spec.lexicon();
        let c = generate_synthetic(&spec).unwrap();
        for d in &c.documents {
            for (a, al) in lex.aspects.iter().enumerate() {
                let pos = d.tokens.iter().any(|w| al.positive.contains(w));
                let neg = d.tokens.iter().any(|w| al.negative.contains(w));
                assert_eq!(pos, d.labels[a] == 1);
                assert_eq!(neg, d.labels[a] == 0);
            }
        }
    }

    #[test]
    fn deterministic_and_validated() {
        assert_eq!(generate_synthetic(&small(0.7, 50)).unwrap(), generate_synthetic(&small(0.7, 50)).unwrap());
        assert!(generate_synthetic(&small(1.5, 5)).is_err());
        assert!(generate_synthetic(&small(f64::NAN, 5)).is_err());
    }

    #[test]
    fn pearson_of_known_columns() {
        assert!((pearson(&[0, 1, 0, 1], &[0, 1, 0, 1]) - 1.0).abs() < 1e-15);
        assert!((pearson(&[0, 1, 0, 1], &[1, 0, 1, 0]) + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1, 1, 1], &[0, 1, 0]), 0.0);
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (n(a) * n(b))
    }

    #[test]
    fn synthetic_embeddings_cluster_by_aspect_and_polarity() {
        let spec = small(0.0, 10);
        let lex = spec.lexicon();
        let vecs: std::collections::HashMap<String, Vec<f64>> = synthetic_embeddings(&spec).into_iter().collect();
        assert_eq!(vecs.len(), lex.all_words().len());
        let mean_cos = |xs: &[String], ys: &[String]| {
            let mut total = 0.0;
            let mut n = 0.0;
            for x in xs {
                for y in ys {
                    if x != y {
                        total += cosine(&vecs[x], &vecs[y]);
                        n += 1.0;
                    }
                }
            }
            total / n
        };
        let (a, b) = (&lex.aspects[0], &lex.aspects[1]);
        assert!(mean_cos(&a.positive, &a.positive) > mean_cos(&a.positive, &b.positive) + 0.2);
        assert!(mean_cos(&a.positive, &a.positive) > mean_cos(&a.positive, &a.negative) + 0.2);
        assert!(mean_cos(&lex.stopwords, &a.content).abs() < 0.2);
    }

    #[test]
    fn polarity_follows_the_generating_halves() {
        let lex = Lexicon::standard(2);
        let a = &lex.aspects[1];
        assert_eq!(lex.polarity(&a.positive[0]), 1.0);
        assert_eq!(lex.polarity(&a.negative[4]), -1.0);
        assert_eq!(lex.polarity(&a.content[0]), 1.0);
        assert_eq!(lex.polarity(&a.content[11]), -1.0);
        assert_eq!(lex.polarity(&lex.stopwords[0]), 0.0);
    }

    #[test]
    fn embedding_text_round_trips() {
        let spec = SynthSpec {
            embedding: EmbeddingSpec {
                dim: 3,
                ..EmbeddingSpec::default()
            },
            ..small(0.0, 10)
        };
        let vecs = synthetic_embeddings(&spec);
        assert_eq!(vecs, synthetic_embeddings(&spec));
        let words: Vec<String> = ["<pad>", "<unk>"]
            .iter()
            .map(|w| w.to_string())
            .chain(vecs.iter().map(|(w, _)| w.clone()))
            .collect();
        let vocab = crate::text::Vocabulary::from_words(words).unwrap();
        let table = crate::text::parse_embeddings("mem", &embeddings_to_text(&vecs), &vocab, 0).unwrap();
        for (w, v) in &vecs {
            assert_eq!(table.row(vocab.id(w)), &v[..]);
        }
        assert!(table.row(0).iter().all(|x| *x == 0.0));
    }
}
