//! The six CLI verbs as library functions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mtm_core::checkpoint::Checkpoint;
use mtm_core::decorrelate::{decorrelate, DecorrelationReport};
use mtm_core::eval::{
    annotations_of, aspect_switch_count, aspect_word_distribution, coherence_report, macro_f1, mask_labels,
    percentile_curves, rationale_precision, score_labels, scores_to_csv, AspectCurve, CoherenceReport, Cooccurrence,
    F1Report, F1Variant, PrecisionReport, WordAspectScores,
};
use mtm_core::io::{read_to_string, write_atomic};
use mtm_core::rationale::{extract, Rationale, WordAssignment};
use mtm_core::synth::{aspect_word_density, embeddings_to_text, generate_synthetic, synthetic_embeddings};
use mtm_core::text::{
    annotations_to_csv, apply_annotations, load_corpus, load_embeddings, tokenize, write_corpus, Corpus, Document,
    EmbeddingTable, LoadOptions, Split, Vocabulary,
};
use mtm_core::training::{encode_split, random_search, train, SearchSetup, TrainLog, TrialResult};
use mtm_core::{CoreError, DocInput, Model, ModelKind};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::html::{fragment, render, HtmlReport, MetricTable, ReportDocument};

/// Writes the resolved config into `dir`.
fn archive(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    write_atomic(dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub corpus: PathBuf,
    pub annotations: PathBuf,
    pub gold_scores: PathBuf,
    pub embeddings: PathBuf,
    pub documents: usize,
    pub decorrelation: Option<DecorrelationReport>,
}

/// Generates the synthetic corpus, its annotation file, a ground-truth score
/// export and word vectors for the synthetic lexicon.
pub fn synth(cfg: &ExperimentConfig) -> Result<SynthOutcome> {
    let mut corpus = generate_synthetic(&cfg.synth).map_err(|e| CliError::Config(format!("synth: {e}")))?;
    let mut decorrelation = None;
    if let Some(d) = &cfg.decorrelate {
        let dc = mtm_core::decorrelate::DecorrelationConfig {
            seed: cfg.seed,
            ..d.clone()
        };
        let (c, report) = decorrelate(&corpus, &dc)?;
        corpus = c;
        write_json(&cfg.out_dir.join("decorrelation.json"), &report)?;
        decorrelation = Some(report);
    }
    let out = &cfg.out_dir;
    let corpus_path = out.join("corpus.jsonl");
    let annotations = out.join("annotations.csv");
    let gold_scores = out.join("gold_scores.csv");
    write_corpus(&corpus, &corpus_path)?;
    write_atomic(&annotations, annotations_to_csv(&corpus).as_bytes())?;
    let t = corpus.num_targets();
    let ids: Vec<&str> = corpus.documents.iter().map(|d| d.id.as_str()).collect();
    let gold: Vec<WordAspectScores> = corpus
        .documents
        .iter()
        .map(|d| WordAspectScores::from_gold(d.gold_word_aspects.as_deref().unwrap_or(&[]), t))
        .collect::<mtm_core::Result<_>>()?;
    write_atomic(&gold_scores, scores_to_csv(&ids, &gold).as_bytes())?;
    let embeddings = out.join("embeddings.txt");
    write_atomic(&embeddings, embeddings_to_text(&synthetic_embeddings(&cfg.synth)).as_bytes())?;
    archive(cfg, out)?;
    Ok(SynthOutcome {
        corpus: corpus_path,
        annotations,
        gold_scores,
        embeddings,
        documents: corpus.documents.len(),
        decorrelation,
    })
}

/// Loads the configured corpus with seeded splits and optional annotations.
pub fn load_experiment_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    let opts = LoadOptions {
        aspect_names: cfg.corpus.aspect_names.clone(),
        seed: cfg.seed,
        ratios: cfg.corpus.split,
    };
    let mut corpus = load_corpus(cfg.corpus_path(), &opts)?;
    if let Some(p) = &cfg.corpus.annotations {
        apply_annotations(&mut corpus, &p.display().to_string(), &read_to_string(p)?)?;
    }
    Ok(corpus)
}

fn embeddings(cfg: &ExperimentConfig, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    Ok(match &cfg.corpus.embeddings {
        Some(p) => load_embeddings(p, vocab, cfg.seed)?,
        None => EmbeddingTable::random_bounded(vocab, cfg.corpus.embedding_dim, cfg.corpus.embedding_bound, cfg.seed),
    })
}

fn check_targets(kind: ModelKind, model_t: usize, corpus: &Corpus) -> Result<()> {
    if model_t != corpus.num_targets() {
        return Err(CoreError::Schema(format!(
            "{kind} model has {model_t} targets, corpus has {}",
            corpus.num_targets()
        ))
        .into());
    }
    Ok(())
}

fn load_checkpoint(path: &Path, corpus: &Corpus) -> Result<(Model, Vocabulary, Checkpoint)> {
    let ck = Checkpoint::load(path)?;
    let (model, vocab) = ck.to_model()?;
    check_targets(model.kind, model.num_targets(), corpus)?;
    Ok((model, vocab, ck))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub kind: ModelKind,
    pub checkpoint: PathBuf,
    pub log: TrainLog,
    pub params: usize,
}

/// Trains every configured model kind in order.
pub fn train_models(cfg: &ExperimentConfig) -> Result<Vec<TrainOutcome>> {
    let corpus = load_experiment_corpus(cfg)?;
    check_targets(cfg.models[0], cfg.model.num_targets, &corpus)?;
    let vocab = Vocabulary::build(&corpus, cfg.corpus.min_count);
    let emb = embeddings(cfg, &vocab)?;
    let train_docs = encode_split(&corpus, &vocab, Split::Train, cfg.train.max_len);
    let valid_docs = encode_split(&corpus, &vocab, Split::Valid, cfg.train.max_len);
    let mut trained: HashMap<ModelKind, Model> = HashMap::new();
    let mut outcomes = Vec::new();
    for &kind in &cfg.models {
        let mut model = match kind {
            ModelKind::MtmC => {
                let source = mtm_c_source(cfg, &trained, &vocab, &corpus)?;
                Model::contextualized(cfg.model.clone(), emb.matrix.clone(), source, cfg.seed)?
            }
            k => Model::new(k, cfg.model.clone(), emb.matrix.clone(), cfg.seed)?,
        };
        log::info!("training {kind} with {} parameters", model.count_params());
        let log = train(&mut model, &train_docs, &valid_docs, &cfg.train)?;
        let dir = cfg.out_dir.join(kind.as_str());
        let checkpoint = dir.join("checkpoint.json");
        Checkpoint::from_model(&model, &vocab, &corpus.aspect_names).save(&checkpoint)?;
        write_atomic(dir.join("train_log.jsonl"), log.to_jsonl().as_bytes())?;
        archive(cfg, &dir)?;
        outcomes.push(TrainOutcome {
            kind,
            checkpoint,
            params: model.count_params(),
            log,
        });
        trained.insert(kind, model);
    }
    archive(cfg, &cfg.out_dir)?;
    Ok(outcomes)
}

fn mtm_c_source(
    cfg: &ExperimentConfig,
    trained: &HashMap<ModelKind, Model>,
    vocab: &Vocabulary,
    corpus: &Corpus,
) -> Result<Model> {
    if let Some(p) = &cfg.source_checkpoint {
        let (m, v, _) = load_checkpoint(p, corpus)?;
        if m.kind != ModelKind::Mtm {
            return Err(CliError::Config(format!("source_checkpoint: expected an mtm checkpoint, got {}", m.kind)));
        }
        if &v != vocab {
            return Err(CoreError::Schema("source checkpoint vocabulary differs from the corpus vocabulary".into()).into());
        }
        return Ok(m);
    }
    trained.get(&ModelKind::Mtm).cloned().ok_or_else(|| {
        CliError::Config("mtm-c needs source_checkpoint or an mtm model earlier in `models`".into())
    })
}

/// Random hyperparameter search per configured model kind.
pub fn search(cfg: &ExperimentConfig) -> Result<Vec<(ModelKind, Vec<TrialResult>)>> {
    let corpus = load_experiment_corpus(cfg)?;
    check_targets(cfg.models[0], cfg.model.num_targets, &corpus)?;
    let vocab = Vocabulary::build(&corpus, cfg.corpus.min_count);
    let emb = embeddings(cfg, &vocab)?;
    let train_docs = encode_split(&corpus, &vocab, Split::Train, cfg.train.max_len);
    let valid_docs = encode_split(&corpus, &vocab, Split::Valid, cfg.train.max_len);
    let dir = cfg.out_dir.join("search");
    let mut all = Vec::new();
    for &kind in &cfg.models {
        let source = match kind {
            ModelKind::MtmC => Some(mtm_c_source(cfg, &HashMap::new(), &vocab, &corpus)?),
            _ => None,
        };
        let setup = SearchSetup {
            kind,
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            embeddings: &emb.matrix,
            source: source.as_ref(),
            train_docs: &train_docs,
            valid_docs: &valid_docs,
        };
        let results = random_search(&setup, &cfg.search)?;
        write_json(&dir.join(format!("{}.json", kind.as_str())), &results)?;
        all.push((kind, results));
    }
    archive(cfg, &dir)?;
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub kind: ModelKind,
    pub params: usize,
    pub documents: usize,
    pub f1_variant: F1Variant,
    pub f1: F1Report,
    /// Budgets used for precision, one fraction per aspect.
    pub budgets: Option<Vec<f64>>,
    pub precision: Option<PrecisionReport>,
    pub curves: Option<Vec<AspectCurve>>,
    pub coherence: Option<CoherenceReport>,
    /// Top words per aspect with their background-adjusted probability.
    pub top_words: Option<Vec<Vec<(String, f64)>>>,
    pub mean_switches: Option<f64>,
    pub p_sel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub aspect_names: Vec<String>,
    /// Gold word scores scored against the sentence annotations.
    pub gold_precision: Option<PrecisionReport>,
    pub models: Vec<ModelEval>,
}

fn budgets(cfg: &ExperimentConfig, docs: &[&Document], t: usize) -> Option<Vec<f64>> {
    if let Some(b) = &cfg.eval.budgets {
        return Some(b.clone());
    }
    if docs.iter().all(|d| d.gold_word_aspects.is_some()) {
        let b: Vec<f64> = (1..=t).map(|a| aspect_word_density(docs.iter().copied(), a)).collect();
        if b.iter().all(|v| *v > 0.0) {
            return Some(b);
        }
    }
    None
}

/// Per-document word scores and the switch count they imply.
fn doc_scores(model: &Model, doc: &DocInput) -> Result<(WordAspectScores, usize, Option<f64>)> {
    let t = model.num_targets();
    if model.kind == ModelKind::Mtm {
        let mask = model.infer_mask(&doc.ids)?;
        let s = WordAspectScores::new(mask.len, t, mask.target_scores())?;
        return Ok((s, aspect_switch_count(&mask_labels(&mask)), Some(mask.selection_rate())));
    }
    let s = WordAspectScores::new(doc.ids.len(), t, model.word_scores(doc)?)?;
    let sw = aspect_switch_count(&score_labels(&s));
    Ok((s, sw, None))
}

fn evaluate_model(
    cfg: &ExperimentConfig,
    model: &Model,
    vocab: &Vocabulary,
    corpus: &Corpus,
    docs: &[&Document],
    reference: &Cooccurrence,
) -> Result<(ModelEval, Option<Vec<WordAspectScores>>)> {
    let t = corpus.num_targets();
    let inputs: Vec<DocInput> = docs
        .iter()
        .map(|d| {
            let mut ids = vocab.encode(&d.tokens);
            ids.truncate(cfg.train.max_len);
            DocInput::new(ids, Some(d.labels.clone()))
        })
        .collect();
    let mut preds = Vec::with_capacity(inputs.len());
    for d in &inputs {
        preds.push(model.infer(d)?.predictions());
    }
    let labels: Vec<Vec<u8>> = docs.iter().map(|d| d.labels.clone()).collect();
    let f1 = macro_f1(&preds, &labels, cfg.eval.f1_variant)?;
    let mut eval = ModelEval {
        kind: model.kind,
        params: model.count_params(),
        documents: docs.len(),
        f1_variant: cfg.eval.f1_variant,
        f1,
        budgets: None,
        precision: None,
        curves: None,
        coherence: None,
        top_words: None,
        mean_switches: None,
        p_sel: None,
    };
    if !model.has_word_scores() {
        return Ok((eval, None));
    }
    let mut scores = Vec::with_capacity(inputs.len());
    let (mut switches, mut psel, mut n_psel) = (0usize, 0.0, 0usize);
    for d in &inputs {
        let (s, sw, p) = doc_scores(model, d)?;
        scores.push(s);
        switches += sw;
        if let Some(p) = p {
            psel += p;
            n_psel += 1;
        }
    }
    eval.mean_switches = Some(switches as f64 / inputs.len() as f64);
    eval.p_sel = (n_psel > 0).then(|| psel / n_psel as f64);

    // Truncation can shorten documents; annotations follow the scored prefix.
    let ann: Vec<Option<Vec<usize>>> = annotations_of(docs.iter().copied())
        .into_iter()
        .zip(&scores)
        .map(|(a, s)| a.map(|mut a| {
            a.truncate(s.len);
            a
        }))
        .collect();
    let annotated = ann.iter().any(Option::is_some);
    if annotated {
        if let Some(b) = budgets(cfg, docs, t) {
            eval.precision = Some(rationale_precision(&scores, &ann, &b, cfg.eval.budget_mode.into())?);
            eval.budgets = Some(b);
        }
        eval.curves = Some(percentile_curves(&scores, &ann)?);
    }
    let tokens: Vec<&[String]> = docs.iter().zip(&scores).map(|(d, s)| &d.tokens[..s.len]).collect();
    let dist = aspect_word_distribution(&tokens, &scores)?;
    eval.coherence = Some(coherence_report(&dist, reference, &cfg.eval.coherence_ns)?);
    eval.top_words = Some((1..=t).map(|a| dist.top_words(a, cfg.eval.top_words)).collect());
    Ok((eval, Some(scores)))
}

fn metrics_csv(report: &EvalReport) -> String {
    let mut out = String::from("model,metric,value\n");
    let mut row = |m: &str, k: &str, v: f64| {
        let _ = writeln!(out, "{m},{k},{v}");
    };
    if let Some(g) = &report.gold_precision {
        for a in &g.aspects {
            row("gold", &format!("precision_aspect{}", a.aspect), a.precision);
        }
    }
    for m in &report.models {
        let k = m.kind.as_str();
        row(k, "params", m.params as f64);
        row(k, "macro_f1", m.f1.macro_f1);
        for (i, v) in m.f1.per_aspect.iter().enumerate() {
            row(k, &format!("f1_aspect{}", i + 1), *v);
        }
        if let Some(p) = &m.precision {
            for a in &p.aspects {
                row(k, &format!("precision_aspect{}", a.aspect), a.precision);
                row(k, &format!("highlighted_pct_aspect{}", a.aspect), a.highlighted_pct);
            }
        }
        if let Some(c) = &m.coherence {
            for (n, v) in c.ns.iter().zip(&c.per_n) {
                row(k, &format!("npmi_n{n}"), *v);
            }
            row(k, "npmi_mean", c.mean);
        }
        if let Some(s) = m.mean_switches {
            row(k, "mean_switches", s);
        }
        if let Some(p) = m.p_sel {
            row(k, "p_sel", p);
        }
    }
    out
}

fn top_words_csv(report: &EvalReport) -> String {
    let mut out = String::from("model,aspect,rank,word,score\n");
    for m in &report.models {
        for (a, words) in m.top_words.iter().flatten().enumerate() {
            for (r, (w, s)) in words.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{}", m.kind.as_str(), a + 1, r + 1, w, s);
            }
        }
    }
    out
}

/// Evaluates every configured model's checkpoint on the evaluation split.
pub fn eval(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let corpus = load_experiment_corpus(cfg)?;
    let docs: Vec<&Document> = corpus.split(cfg.eval.split).collect();
    if docs.is_empty() {
        return Err(CoreError::Empty(format!("the {:?} split is empty", cfg.eval.split)).into());
    }
    let t = corpus.num_targets();
    let reference = Cooccurrence::from_documents(corpus.documents.iter().map(|d| d.tokens.as_slice()));
    let ann = annotations_of(docs.iter().copied());
    let gold_precision = match budgets(cfg, &docs, t) {
        Some(b) if ann.iter().any(Option::is_some) && docs.iter().all(|d| d.gold_word_aspects.is_some()) => {
            let gold: Vec<WordAspectScores> = docs
                .iter()
                .map(|d| WordAspectScores::from_gold(d.gold_word_aspects.as_ref().expect("checked"), t))
                .collect::<mtm_core::Result<_>>()?;
            Some(rationale_precision(&gold, &ann, &b, cfg.eval.budget_mode.into())?)
        }
        _ => None,
    };
    let dir = cfg.out_dir.join("eval");
    let mut models = Vec::new();
    for &kind in &cfg.models {
        let (model, vocab, _) = load_checkpoint(&cfg.checkpoint_path(kind), &corpus)?;
        let (m, scores) = evaluate_model(cfg, &model, &vocab, &corpus, &docs, &reference)?;
        if let Some(s) = scores {
            let ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
            write_atomic(dir.join(format!("{}_scores.csv", kind.as_str())), scores_to_csv(&ids, &s).as_bytes())?;
        }
        models.push(m);
    }
    let report = EvalReport {
        split: cfg.eval.split,
        aspect_names: corpus.aspect_names.clone(),
        gold_precision,
        models,
    };
    write_json(&dir.join("report.json"), &report)?;
    write_atomic(dir.join("metrics.csv"), metrics_csv(&report).as_bytes())?;
    write_atomic(dir.join("top_words.csv"), top_words_csv(&report).as_bytes())?;
    archive(cfg, &dir)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub kind: ModelKind,
    pub tokens: Vec<String>,
    pub aspect_names: Vec<String>,
    pub rationale: Rationale,
}

fn masker_kind(cfg: &ExperimentConfig) -> Result<ModelKind> {
    cfg.models
        .iter()
        .copied()
        .find(|k| *k == ModelKind::Mtm)
        .ok_or_else(|| CliError::Config("explain needs an mtm model in `models`".into()))
}

/// Rationale of free text under the configured mtm checkpoint. Writes
/// `explain/rationale.json` and, when asked, an HTML fragment.
pub fn explain(cfg: &ExperimentConfig, text: &str, html: bool) -> Result<Explanation> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(CliError::Usage("explain needs non-empty text".into()));
    }
    let kind = masker_kind(cfg)?;
    let ck = Checkpoint::load(cfg.checkpoint_path(kind))?;
    let (model, vocab) = ck.to_model()?;
    let mut ids = vocab.encode(&tokens);
    ids.truncate(cfg.train.max_len);
    let tokens = tokens[..ids.len()].to_vec();
    let rationale = extract(&model.infer_mask(&ids)?);
    let ex = Explanation {
        kind,
        tokens,
        aspect_names: ck.aspect_names.clone(),
        rationale,
    };
    let dir = cfg.out_dir.join("explain");
    write_json(&dir.join("rationale.json"), &ex)?;
    if html {
        let frag = fragment(&ex.tokens, &ex.rationale.words, &ex.aspect_names);
        write_atomic(dir.join("rationale.html"), frag.as_bytes())?;
    }
    archive(cfg, &dir)?;
    Ok(ex)
}

fn report_kind(cfg: &ExperimentConfig) -> Result<ModelKind> {
    if let Some(k) = cfg.report.model {
        return Ok(k);
    }
    cfg.models
        .iter()
        .copied()
        .find(|k| !matches!(k, ModelKind::Base | ModelKind::MtmC))
        .ok_or_else(|| CliError::Config("report needs a model with word scores in `models` or report.model".into()))
}

fn generated_stamp(fixed: bool) -> String {
    if fixed {
        return "at a fixed clock (reproducible mode)".into();
    }
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!("at unix time {secs}")
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn eval_tables(report: &EvalReport) -> Vec<MetricTable> {
    let names = &report.aspect_names;
    let mut f1 = MetricTable {
        title: "Macro F1".into(),
        header: std::iter::once("model".to_string())
            .chain(names.iter().cloned())
            .chain(["macro".to_string(), "params".to_string()])
            .collect(),
        rows: vec![],
    };
    let mut prec = MetricTable {
        title: "Rationale precision (% highlighted)".into(),
        header: std::iter::once("model".to_string()).chain(names.iter().cloned()).collect(),
        rows: vec![],
    };
    let mut npmi = MetricTable {
        title: "NPMI coherence".into(),
        header: vec!["model".into()],
        rows: vec![],
    };
    if let Some(g) = &report.gold_precision {
        let mut row = vec!["gold".to_string()];
        row.extend(g.aspects.iter().map(|a| format!("{} ({:.1})", fmt(100.0 * a.precision), a.highlighted_pct)));
        prec.rows.push(row);
    }
    for m in &report.models {
        let mut row = vec![m.kind.to_string()];
        row.extend(m.f1.per_aspect.iter().map(|v| fmt(*v)));
        row.push(fmt(m.f1.macro_f1));
        row.push(m.params.to_string());
        f1.rows.push(row);
        if let Some(p) = &m.precision {
            let mut row = vec![m.kind.to_string()];
            row.extend(p.aspects.iter().map(|a| format!("{} ({:.1})", fmt(100.0 * a.precision), a.highlighted_pct)));
            prec.rows.push(row);
        }
        if let Some(c) = &m.coherence {
            if npmi.header.len() == 1 {
                npmi.header.extend(c.ns.iter().map(|n| format!("N={n}")));
                npmi.header.push("mean".into());
            }
            let mut row = vec![m.kind.to_string()];
            row.extend(c.per_n.iter().map(|v| format!("{v:.4}")));
            row.push(format!("{:.4}", c.mean));
            npmi.rows.push(row);
        }
    }
    [f1, prec, npmi].into_iter().filter(|t| !t.rows.is_empty()).collect()
}

/// Renders `report.html` for the configured model over the report split,
/// including the metric tables of a previous `eval` run when present.
pub fn report(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let corpus = load_experiment_corpus(cfg)?;
    let kind = report_kind(cfg)?;
    let (model, vocab, ck) = load_checkpoint(&cfg.checkpoint_path(kind), &corpus)?;
    if !model.has_word_scores() {
        return Err(CliError::Config(format!("report.model: {kind} models produce no word scores")));
    }
    let mut documents = Vec::new();
    for d in corpus.split(cfg.report.split).take(cfg.report.max_documents) {
        let mut ids = vocab.encode(&d.tokens);
        ids.truncate(cfg.train.max_len);
        let input = DocInput::new(ids, Some(d.labels.clone()));
        let (words, switches) = if kind == ModelKind::Mtm {
            let mask = model.infer_mask(&input.ids)?;
            let r = extract(&mask);
            let sw = aspect_switch_count(&mask_labels(&mask));
            (r.words, sw)
        } else {
            let (s, sw, _) = doc_scores(&model, &input)?;
            let words = (0..s.len)
                .map(|l| {
                    let row = &s.scores[l * s.num_targets..(l + 1) * s.num_targets];
                    let a = mtm_core::eval::argmax(row);
                    WordAssignment {
                        aspect: a + 1,
                        confidence: row[a],
                    }
                })
                .collect();
            (words, sw)
        };
        let predictions = model.infer(&input)?.predictions();
        documents.push(ReportDocument {
            id: d.id.clone(),
            tokens: d.tokens[..input.ids.len()].to_vec(),
            words,
            switches,
            labels: Some(d.labels.clone()),
            predictions: Some(predictions),
        });
    }
    let eval_path = cfg.out_dir.join("eval").join("report.json");
    let tables = if eval_path.exists() {
        let text = read_to_string(&eval_path)?;
        let er: EvalReport = serde_json::from_str(&text).map_err(|e| CoreError::Parse {
            path: eval_path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        eval_tables(&er)
    } else {
        Vec::new()
    };
    let html = render(&HtmlReport {
        title: format!("{kind} rationales"),
        aspect_names: ck.aspect_names.clone(),
        generated: generated_stamp(cfg.report.fixed_clock),
        tables,
        documents,
    });
    let path = cfg.out_dir.join("report.html");
    write_atomic(&path, html.as_bytes())?;
    archive(cfg, &cfg.out_dir)?;
    Ok(path)
}
