use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pemvc::autograd::Fault;
use pemvc::harness::{self, gradsuite, RunArgs};
use pemvc::synth::{self, Dataset, GenConfig, Split};
use pemvc::{Error, Result};

#[derive(Parser)]
#[command(name = "pemvc", version, about = "Paired volume + tabular classification with cross-modal attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and split it by patient.
    Gen {
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
        /// JSON file of generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one arm; writes checkpoint.bin and history.jsonl into --out.
    Train(RunArgs),
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "test")]
        split: String,
        /// Defaults to <out>/checkpoint.bin.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and test every arm for each seed.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Finite-difference check of every differentiable unit, or one by name.
    Gradcheck {
        #[arg(default_value = "all")]
        scope: String,
        /// Corrupts an adjoint to show the suite catches it.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { data, seed, n, config } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    serde_json::from_str(&text).map_err(|e| Error::Usage(format!("generator config: {e}")))?
                }
                None => GenConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = n {
                cfg.n_patients = n;
            }
            let ds = synth::generate_split(&cfg)?;
            ds.save(&data)?;
            let pos = ds.records.iter().filter(|r| r.label == 1).count();
            let counts = Split::ALL.map(|s| ds.indices(s).len());
            println!(
                "wrote {} patients ({pos} positive) to {}; train/val/test = {}/{}/{}",
                ds.records.len(),
                data.display(),
                counts[0],
                counts[1],
                counts[2]
            );
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let out = harness::run_train(&cfg)?;
            std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Io { path: cfg.out.clone(), source: e })?;
            out.checkpoint.save(&cfg.out.join("checkpoint.bin"))?;
            let lines: Vec<String> = out.history.iter().map(|h| serde_json::to_string(h).unwrap()).collect();
            std::fs::write(cfg.out.join("history.jsonl"), lines.join("\n") + "\n")
                .map_err(|e| Error::Io { path: cfg.out.clone(), source: e })?;
            for h in &out.history {
                let auc = h.val_auroc.map_or("-".into(), |a| format!("{a:.4}"));
                println!("epoch {:>3}  loss {:.4}  val AUROC {auc}", h.epoch, h.train_loss);
            }
            println!("kept epoch {}; checkpoint in {}", out.checkpoint.settings.best_epoch, cfg.out.display());
        }
        Command::Eval { run, split, checkpoint } => {
            let cfg = run.resolve()?;
            let split: Split = split.parse()?;
            let path = checkpoint.unwrap_or_else(|| cfg.out.join("checkpoint.bin"));
            let ckpt = harness::Checkpoint::load(&path)?;
            let ds = Dataset::load(&cfg.data)?;
            let report = match run.arm {
                Some(arm) => harness::evaluate_as(&ckpt, &ds, split, arm)?,
                None => harness::evaluate(&ckpt, &ds, split)?,
            };
            let line = report.to_json_line();
            std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Io { path: cfg.out.clone(), source: e })?;
            let mpath = cfg.out.join(format!("metrics-{}.jsonl", split.as_str()));
            std::fs::write(&mpath, format!("{line}\n")).map_err(|e| Error::Io { path: mpath, source: e })?;
            println!("{line}");
        }
        Command::Ablate { run, seeds } => {
            let cfg = run.resolve()?;
            let result = harness::run_ablation(&seeds, &cfg)?;
            print!("{}", result.summary_table());
            println!("{} report lines in {}", result.lines().len(), cfg.out.join(harness::ablate::ABLATION_FILE).display());
        }
        Command::Gradcheck { scope, inject_fault } => {
            let fault = match inject_fault.as_deref() {
                None => None,
                Some("matmul") => Some(Fault::MatmulAdjoint),
                Some(other) => return Err(Error::Usage(format!("unknown fault `{other}` (matmul)"))),
            };
            let results = gradsuite::run_gradcheck(&scope, fault)?;
            print!("{}", gradsuite::format_table(&results));
            if !gradsuite::all_passed(&results) {
                let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
                return Err(Error::Verification(format!("gradient check failed for {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
