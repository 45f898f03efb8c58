use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtm_cli::commands;
use mtm_cli::{CliError, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "mtm", version, about = "Multi-target masker: training, evaluation and rationales")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with annotations and gold word scores.
    Synth,
    /// Train every model listed in the config.
    Train,
    /// Random hyperparameter search.
    Search,
    /// Evaluate trained checkpoints.
    Eval,
    /// Extract the rationale of a text with the trained masker.
    Explain {
        /// Text to explain.
        #[arg(long, conflicts_with = "file")]
        text: Option<String>,
        /// File holding the text to explain.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Also write an HTML fragment.
        #[arg(long)]
        html: bool,
    },
    /// Render the HTML report.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    }
    .resolve(cli.seed, cli.out)?;
    match cli.command {
        Command::Synth => {
            let o = commands::synth(&cfg)?;
            println!("wrote {} documents to {}", o.documents, o.corpus.display());
            if let Some(d) = o.decorrelation {
                println!(
                    "mean label correlation {:.3} -> {:.3} (target {:.3}, met: {})",
                    d.initial_correlation, d.achieved_correlation, d.target, d.target_met
                );
            }
        }
        Command::Train => {
            for o in commands::train_models(&cfg)? {
                let best = o.log.best().val_macro_f1;
                println!(
                    "{}: {} parameters, best epoch {} (macro F1 {best:.2}), checkpoint {}",
                    o.kind,
                    o.params,
                    o.log.best_epoch,
                    o.checkpoint.display()
                );
            }
        }
        Command::Search => {
            for (kind, results) in commands::search(&cfg)? {
                match results.first().and_then(|b| b.val_macro_f1.map(|f| (b.trial, f))) {
                    Some((trial, f1)) => println!("{kind}: best trial {trial} with macro F1 {f1:.2}"),
                    None => println!("{kind}: no trial completed"),
                }
            }
        }
        Command::Eval => {
            let r = commands::eval(&cfg)?;
            for m in &r.models {
                println!("{}: macro F1 {:.2}", m.kind, m.f1.macro_f1);
                if let Some(p) = &m.precision {
                    let v: Vec<String> = p.aspects.iter().map(|a| format!("{:.3}", a.precision)).collect();
                    println!("  precision {}", v.join(" "));
                }
            }
        }
        Command::Explain { text, file, html } => {
            let text = match (text, file) {
                (Some(t), None) => t,
                (None, Some(f)) => mtm_core::io::read_to_string(&f)?,
                _ => return Err(CliError::Usage("explain needs --text or --file".into())),
            };
            let ex = commands::explain(&cfg, &text, html)?;
            for s in &ex.rationale.spans {
                let words = ex.tokens[s.start..s.end].join(" ");
                println!("{}: {words}", ex.aspect_names[s.aspect - 1]);
            }
        }
        Command::Report => {
            let p = commands::report(&cfg)?;
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
