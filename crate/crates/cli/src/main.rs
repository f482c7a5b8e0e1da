use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alanet::caption::{
    corrupt_confused, corrupt_incomplete, corrupt_incorrect, read_records, record_seed, score_corruptions,
    synthetic_corpus, write_records, CaptionRecord, CorruptionKind, Degree, Layer, MetricRow, PosLexicon,
};
use alanet::dataset::{make_dataset, SynthOptions};
use alanet::network::{checkpoint, Alanet};
use alanet::params::ParamStore;
use alanet::ppm;
use alanet::suite::{run_suite, SuiteOptions};
use alanet::train::{evaluate, load_samples, train, CaptionMode, EvalRecord, RunConfig};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alanet", version, about = "Language-guided reflection separation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct SeedArg {
    /// Seed for every random choice the command makes. Overrides the seeds
    /// of a config file; 0 when neither is given.
    #[arg(long, env = "ALANET_SEED")]
    seed: Option<u64>,
}

impl SeedArg {
    fn or(self, fallback: u64) -> u64 {
        self.seed.unwrap_or(fallback)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Blend source images into a paired training set.
    Synth {
        /// Directory of P6 PPM images, with optional `<stem>.txt` captions.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 32)]
        patch: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Corrupt every record of a caption file.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: CorruptionKind,
        #[arg(long, value_parser = parse_degree)]
        degree: Degree,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Score every corruption kind and degree as CSV.
    CaptionScore {
        /// Caption file; a seeded synthetic corpus is used when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Size of the synthetic corpus.
        #[arg(long, default_value_t = 50)]
        corpus_size: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-3)]
        end_to_end_tol: f64,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Train from a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, value_parser = parse_mode)]
        captions: Option<CaptionMode>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// PSNR/SSIM of the transmission estimate over a manifest.
    Eval {
        /// Checkpoint; a freshly initialised network is used when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_parser = parse_mode, default_value = "both")]
        captions: CaptionMode,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Separate one image into transmission and reflection PPMs.
    Infer {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_t: PathBuf,
        #[arg(long)]
        out_r: PathBuf,
        #[arg(long)]
        caption_t: Option<String>,
        #[arg(long)]
        caption_r: Option<String>,
        #[command(flatten)]
        seed: SeedArg,
    },
}

fn parse_kind(s: &str) -> std::result::Result<CorruptionKind, String> {
    match s.parse() {
        Ok(CorruptionKind::Accurate) => Err("accurate is not a corruption".into()),
        Ok(k) => Ok(k),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_degree(s: &str) -> std::result::Result<Degree, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    Degree::try_from(v).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<CaptionMode, String> {
    s.parse().map_err(|e: alanet::Error| e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(RunConfig::default()),
    }
}

/// Loads a checkpoint, or builds a fresh network from the config.
fn network(checkpoint_path: Option<&Path>, config: Option<&Path>, seed: SeedArg) -> Result<(Alanet, ParamStore)> {
    if let Some(p) = checkpoint_path {
        return checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()));
    }
    let mut cfg = load_config(config)?.network;
    cfg.seed = seed.or(cfg.seed);
    Ok(Alanet::new(cfg)?)
}

fn corrupt(records: &[CaptionRecord], kind: CorruptionKind, degree: Degree, seed: u64) -> Vec<CaptionRecord> {
    let lex = PosLexicon::bundled();
    let seed_of = |r: &CaptionRecord| record_seed(seed, &r.image_id, r.layer);
    match kind {
        CorruptionKind::Incorrect => records
            .iter()
            .map(|r| corrupt_incorrect(r, degree, lex, seed_of(r)))
            .collect(),
        CorruptionKind::Incomplete => records
            .iter()
            .map(|r| corrupt_incomplete(r, degree, seed_of(r)))
            .collect(),
        _ => {
            let mut out = records.to_vec();
            for i in 0..records.len() {
                if records[i].layer != Layer::T {
                    continue;
                }
                let partner = (0..records.len())
                    .find(|&j| records[j].layer == Layer::R && records[j].image_id == records[i].image_id);
                match partner {
                    Some(j) => {
                        let p = corrupt_confused(&records[i], &records[j], degree, seed_of(&records[i]));
                        out[i] = p.t;
                        out[j] = p.r;
                    }
                    None => log::warn!("{} has no reflection caption to exchange with", records[i].image_id),
                }
            }
            out
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            source,
            out,
            pairs,
            patch,
            seed,
        } => {
            let opts = SynthOptions {
                patch,
                ..SynthOptions::default()
            };
            let records = make_dataset(&source, pairs, seed.or(0), &out, &opts)?;
            println!("wrote {} pairs to {}", records.len(), out.display());
        }
        Command::Corrupt {
            input,
            output,
            kind,
            degree,
            seed,
        } => {
            let records = read_records(&input).with_context(|| format!("reading {}", input.display()))?;
            write_records(&output, &corrupt(&records, kind, degree, seed.or(0)))?;
        }
        Command::CaptionScore {
            input,
            output,
            corpus_size,
            seed,
        } => {
            let lex = PosLexicon::bundled();
            let pairs = match input {
                None => synthetic_corpus(corpus_size, seed.or(0), lex),
                Some(p) => {
                    let records = read_records(&p).with_context(|| format!("reading {}", p.display()))?;
                    let pairs: Vec<_> = records
                        .iter()
                        .filter(|t| t.layer == Layer::T)
                        .filter_map(|t| {
                            records
                                .iter()
                                .find(|r| r.layer == Layer::R && r.image_id == t.image_id)
                                .map(|r| (t.clone(), r.clone()))
                        })
                        .collect();
                    if pairs.is_empty() {
                        bail!("{} has no T/R caption pairs", p.display());
                    }
                    pairs
                }
            };
            MetricRow::write_csv(&output, &score_corruptions(&pairs, lex, seed.or(0)))?;
        }
        Command::Gradcheck {
            tol,
            end_to_end_tol,
            step,
            seed,
        } => {
            let opts = SuiteOptions {
                h: step,
                tol,
                end_to_end_tol,
                seed: seed.or(0),
            };
            let reports = run_suite(&opts)?;
            for r in &reports {
                println!("{r}");
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            println!("{} checks, {failed} failed", reports.len());
            if failed > 0 {
                bail!("{failed} gradient checks failed");
            }
        }
        Command::Train {
            manifest,
            config,
            out,
            trace,
            epochs,
            lr,
            captions,
            seed,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.network.seed = seed.or(cfg.network.seed);
            cfg.train.seed = seed.or(cfg.train.seed);
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(lr) = lr {
                cfg.train.lr = lr;
            }
            if let Some(m) = captions {
                cfg.train.captions = m;
            }
            let samples = load_samples(&manifest).with_context(|| format!("loading {}", manifest.display()))?;
            let (net, mut params) = Alanet::new(cfg.network.clone())?;
            let report = train(&net, &mut params, &samples, &cfg.train)?;
            checkpoint::save(&out, &cfg.network, &params)?;
            if let Some(t) = trace {
                report.write_csv(&t)?;
            }
            if let Some(last) = report.trace.last() {
                println!("{} iterations, final loss {:.6}", report.trace.len(), last.total);
            }
        }
        Command::Eval {
            checkpoint,
            config,
            manifest,
            output,
            captions,
            seed,
        } => {
            let (net, params) = network(checkpoint.as_deref(), config.as_deref(), seed)?;
            let samples = load_samples(&manifest).with_context(|| format!("loading {}", manifest.display()))?;
            let records = evaluate(&net, &params, &samples, captions)?;
            EvalRecord::write_csv(&output, &records)?;
            let n = records.len() as f64;
            let psnr = records.iter().map(|r| r.psnr).sum::<f64>() / n;
            let ssim = records.iter().map(|r| r.ssim).sum::<f64>() / n;
            println!("{} images, mean PSNR {psnr:.3} dB, mean SSIM {ssim:.4}", records.len());
        }
        Command::Infer {
            checkpoint,
            config,
            input,
            out_t,
            out_r,
            caption_t,
            caption_r,
            seed,
        } => {
            let (net, params) = network(checkpoint.as_deref(), config.as_deref(), seed)?;
            let image = ppm::read_ppm(&input).with_context(|| format!("reading {}", input.display()))?;
            let pred = net
                .predict(&params, &image, caption_t.as_deref(), caption_r.as_deref())?
                .clamped();
            ppm::write_ppm(&pred.t_hat, &out_t)?;
            ppm::write_ppm(&pred.r_hat, &out_r)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
