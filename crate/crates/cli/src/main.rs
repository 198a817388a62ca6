use clap::{Args, Parser, Subcommand};
use pulsetone::harness::{cmd_eval, cmd_gen, cmd_train, cmd_translate, ExperimentConfig, HarnessError, TrainOptions};
use std::path::PathBuf;
use std::process::ExitCode;

/// Skin-tone translation lab: simulate, train, evaluate, translate.
#[derive(Parser)]
#[command(name = "pulsetone", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render the simulated dataset.
    Gen(Common),
    /// Train the learned methods listed in the config.
    Train {
        #[command(flatten)]
        common: Common,
        /// Stop after this many epochs (pre-training included).
        #[arg(long)]
        stop_after_epoch: Option<usize>,
        /// Continue from existing checkpoints.
        #[arg(long)]
        resume: bool,
    },
    /// Score every configured method on the evaluation split.
    Eval(Common),
    /// Translate an RVID file with a generator checkpoint.
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output RVID path; diagnostics go next to it.
        #[arg(long)]
        out: PathBuf,
        /// Frames per inference chunk.
        #[arg(long, default_value_t = 64)]
        chunk: usize,
    },
}

fn load(c: &Common) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &c.out {
        cfg.out = Some(out.clone());
    }
    let out = cfg.out_dir()?.to_path_buf();
    Ok((cfg, out))
}

fn run(cmd: Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::Gen(c) => {
            let (cfg, out) = load(&c)?;
            let m = cmd_gen(&cfg, &out)?;
            println!("wrote {} subjects to {}", m.subjects.len(), out.join("data").display());
        }
        Cmd::Train {
            common,
            stop_after_epoch,
            resume,
        } => {
            let (cfg, out) = load(&common)?;
            let opts = TrainOptions { stop_after_epoch, resume };
            for m in cmd_train(&cfg, &out, opts)? {
                let last = m.log.last().map_or(f64::NAN, |r| r.loss);
                println!(
                    "{}: {} epochs, final loss {last:.4}{}",
                    m.method,
                    m.total_epochs(&cfg.train),
                    if m.complete { "" } else { " (stopped early)" }
                );
            }
        }
        Cmd::Eval(c) => {
            let (cfg, out) = load(&c)?;
            let report = cmd_eval(&cfg, &out)?;
            for r in &report.reports {
                let groups: Vec<String> = r.groups.iter().map(|(g, m)| format!("{g} {:.2}", m.mae)).collect();
                let bias = r.bias.as_ref().map_or(String::new(), |b| format!(", bias std {:.2}", b.std_mae));
                println!("{}: MAE {:.2} ({}){bias}", r.method, r.overall.mae, groups.join(", "));
            }
        }
        Cmd::Translate {
            checkpoint,
            input,
            out,
            chunk,
        } => {
            let d = cmd_translate(&checkpoint, &input, &out, chunk)?;
            let hr = |v: Option<f64>| v.map_or("-".to_string(), |b| format!("{b:.1}"));
            println!(
                "luminance drop {:.4}; POS HR {} -> {} BPM",
                d.luminance_drop,
                hr(d.pos_hr_in_bpm),
                hr(d.pos_hr_out_bpm)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
