//! Declarative experiment configuration read from TOML.

use std::path::{Path, PathBuf};

use mtm_core::decorrelate::DecorrelationConfig;
use mtm_core::eval::{BudgetMode, F1Variant, COHERENCE_NS};
use mtm_core::synth::SynthSpec;
use mtm_core::text::{Split, SplitRatios, DEFAULT_MIN_COUNT};
use mtm_core::training::{SearchSpace, TrainConfig};
use mtm_core::{ModelConfig, ModelKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Everything one run needs. The top-level `seed` overrides the seeds of the
/// `synth` and `train` blocks so a single number controls a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Models trained, searched and evaluated, in order.
    pub models: Vec<ModelKind>,
    /// Masker checkpoint for mtm-c; defaults to the mtm model trained earlier
    /// in the same run.
    pub source_checkpoint: Option<PathBuf>,
    pub corpus: CorpusConfig,
    pub synth: SynthSpec,
    pub decorrelate: Option<DecorrelationConfig>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub search: SearchSpace,
    pub eval: EvalConfig,
    pub report: ReportConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            models: vec![ModelKind::Mtm],
            source_checkpoint: None,
            corpus: CorpusConfig::default(),
            synth: SynthSpec::default(),
            decorrelate: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            search: SearchSpace::default(),
            eval: EvalConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// JSONL corpus; defaults to `corpus.jsonl` in the output directory.
    pub path: Option<PathBuf>,
    /// Optional `id,sentence_index,aspect_index` annotation file.
    pub annotations: Option<PathBuf>,
    pub aspect_names: Option<Vec<String>>,
    /// Word-vector text file; random vectors are used when absent.
    pub embeddings: Option<PathBuf>,
    pub embedding_dim: usize,
    /// Random vectors are drawn from `U(-bound, bound)`.
    pub embedding_bound: f64,
    pub min_count: usize,
    pub split: SplitRatios,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            path: None,
            annotations: None,
            aspect_names: None,
            embeddings: None,
            embedding_dim: 200,
            embedding_bound: 0.1,
            min_count: DEFAULT_MIN_COUNT,
            split: SplitRatios::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split: Split,
    /// Per-aspect selection fractions; defaults to the gold aspect-word
    /// density when the corpus carries word-level gold.
    pub budgets: Option<Vec<f64>>,
    pub budget_mode: BudgetModeName,
    pub f1_variant: F1Variant,
    pub top_words: usize,
    pub coherence_ns: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: Split::Test,
            budgets: None,
            budget_mode: BudgetModeName::PerDocument,
            f1_variant: F1Variant::ClassMacro,
            top_words: 10,
            coherence_ns: COHERENCE_NS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetModeName {
    PerDocument,
    CorpusWide,
}

impl From<BudgetModeName> for BudgetMode {
    fn from(m: BudgetModeName) -> Self {
        match m {
            BudgetModeName::PerDocument => BudgetMode::PerDocument,
            BudgetModeName::CorpusWide => BudgetMode::CorpusWide,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Model whose word scores are rendered; defaults to the first listed
    /// model that produces word scores.
    pub model: Option<ModelKind>,
    pub split: Split,
    pub max_documents: usize,
    /// Stamp the report with a constant time so output is byte-reproducible.
    pub fixed_clock: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            model: None,
            split: Split::Test,
            max_documents: 50,
            fixed_clock: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(source: &str, text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{source}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&path.display().to_string(), &text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// Applies command-line overrides and propagates the run seed.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out_dir = o;
        }
        let out_dir = self.out_dir.clone();
        let c = &mut self.corpus;
        for p in [&mut c.path, &mut c.annotations, &mut c.embeddings].into_iter().flatten() {
            *p = expand_out_dir(p, &out_dir);
        }
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |path: &str, e: mtm_core::CoreError| CliError::Config(format!("{path}: {e}"));
        self.synth.validate().map_err(|e| field("synth", e))?;
        self.train.validate().map_err(|e| field("train", e))?;
        self.search.validate().map_err(|e| field("search", e))?;
        let mut probe = self.model.clone();
        probe.embed_dim = self.corpus.embedding_dim;
        probe.validate().map_err(|e| field("model", e))?;
        if self.models.is_empty() {
            return Err(CliError::Config("models: list at least one model kind".into()));
        }
        if self.corpus.embedding_dim == 0 {
            return Err(CliError::Config("corpus.embedding_dim: must be positive".into()));
        }
        if !(self.corpus.embedding_bound > 0.0 && self.corpus.embedding_bound.is_finite()) {
            return Err(CliError::Config("corpus.embedding_bound: must be positive".into()));
        }
        if let Some(b) = &self.eval.budgets {
            if b.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                return Err(CliError::Config("eval.budgets: fractions must lie in (0, 1]".into()));
            }
        }
        if self.eval.top_words == 0 {
            return Err(CliError::Config("eval.top_words: must be positive".into()));
        }
        Ok(())
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.corpus.path.clone().unwrap_or_else(|| self.out_dir.join("corpus.jsonl"))
    }

    pub fn checkpoint_path(&self, kind: ModelKind) -> PathBuf {
        self.out_dir.join(kind.as_str()).join("checkpoint.json")
    }
}

/// Replaces a `{out_dir}` placeholder so corpus paths follow `--out`.
fn expand_out_dir(p: &Path, out_dir: &Path) -> PathBuf {
    match p.to_str() {
        Some(s) if s.contains(OUT_DIR_PLACEHOLDER) => PathBuf::from(s.replace(OUT_DIR_PLACEHOLDER, &out_dir.to_string_lossy())),
        _ => p.to_path_buf(),
    }
}

pub const OUT_DIR_PLACEHOLDER: &str = "{out_dir}";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_paths_follow_the_output_directory() {
        let text = "out_dir = \"a\"\n[corpus]\nembeddings = \"{out_dir}/embeddings.txt\"\npath = \"fixed.jsonl\"\n";
        let cfg = ExperimentConfig::from_toml("mem", text).unwrap();
        let moved = cfg.clone().resolve(None, Some(PathBuf::from("b"))).unwrap();
        assert_eq!(moved.corpus.embeddings, Some(PathBuf::from("b/embeddings.txt")));
        assert_eq!(moved.corpus.path, Some(PathBuf::from("fixed.jsonl")));
        let kept = cfg.resolve(None, None).unwrap();
        assert_eq!(kept.corpus.embeddings, Some(PathBuf::from("a/embeddings.txt")));
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml("mem", &cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_toml("mem", "sed = 3").is_err());
        assert!(ExperimentConfig::from_toml("mem", "[train]\nlearning_rate = 0.1").is_err());
    }

    #[test]
    fn seed_propagates() {
        let cfg = ExperimentConfig::from_toml("mem", "seed = 4").unwrap().resolve(Some(9), None).unwrap();
        assert_eq!((cfg.seed, cfg.synth.seed, cfg.train.seed), (9, 9, 9));
    }

    #[test]
    fn invalid_blocks_name_their_field() {
        let err = ExperimentConfig::from_toml("mem", "[synth]\nrho = 2.0")
            .unwrap()
            .resolve(None, None)
            .unwrap_err();
        assert!(err.to_string().contains("synth"), "{err}");
    }

    #[test]
    fn unknown_model_kind_lists_valid_kinds() {
        let err = ExperimentConfig::from_toml("mem", "models = [\"svm\"]").unwrap_err();
        assert!(err.to_string().contains("mtm-c"), "{err}");
    }
}
