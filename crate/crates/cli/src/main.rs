use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cgpcnn::autodiff::Fault;
use cgpcnn::corpus::{read_manifest, synth_speaker_corpus, SynthCorpusConfig};
use cgpcnn::experiment::ablate::{
    ablation_cells, run_cells, run_resplit_cell, summarize, write_results_csv, write_summary_csv, FeatureCache,
    ResultRow,
};
use cgpcnn::experiment::audit::{gradcheck_suite, shape_audit, GRADCHECK_THRESHOLD, REFERENCE_CHAIN};
use cgpcnn::experiment::dataset::{extract_to_dir, speakers_of, Dataset};
use cgpcnn::experiment::{evaluate, features_label, train, FeatureSource, NoiseSpec, TrainConfig};
use cgpcnn::{Architecture, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_AUDIT: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "cgpcnn", version, about = "Speaker identification with cross-gate parallel CNNs")]
struct Cli {
    /// Training config JSON; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic speaker corpus with manifests.
    Synth {
        #[arg(long, default_value_t = 8)]
        speakers: usize,
        #[arg(long, default_value_t = 10)]
        utterances: usize,
        #[arg(long, default_value_t = 5)]
        train_per_speaker: usize,
    },
    /// Compute CMN-normalized MFBF files for every utterance in a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "13,26,40")]
        dims: Vec<usize>,
        /// Defaults to `<out-dir>/features`.
        #[arg(long)]
        features_dir: Option<PathBuf>,
    },
    /// Train a network and save the best checkpoint.
    Train(TrainArgs),
    /// Speaker recognition rate of a checkpoint, optionally under white noise.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Read features from here instead of extracting them from audio.
        #[arg(long)]
        features_dir: Option<PathBuf>,
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
    },
    /// Train and score every architecture, feature pair and seed.
    Ablate {
        /// Manifest of the whole corpus; it is re-split for every seed.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "cg-pcnn,pcnn,g-pcnn,sfan")]
        architectures: Vec<Architecture>,
        /// Pairs like `26+40`, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "26+40")]
        pairs: Vec<String>,
        #[arg(long, default_value_t = 10)]
        n_seeds: usize,
        #[arg(long, default_value_t = 5)]
        train_per_speaker: usize,
        #[arg(long)]
        features_dir: Option<PathBuf>,
        #[command(flatten)]
        widths: Widths,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Finite-difference check of every primitive and a small end-to-end network.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Print the layer shape chain and compare it with the reference table.
    ShapeAudit {
        #[arg(long, default_value_t = 26)]
        m1: usize,
        #[arg(long, default_value_t = 40)]
        m2: usize,
        #[arg(long, default_value_t = 300)]
        frames: usize,
        #[arg(long, default_value_t = 10)]
        speakers: usize,
    },
}

#[derive(Args)]
struct Widths {
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    head_channels: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    architecture: Option<Architecture>,
    /// Feature dimensions, e.g. `26,40` or `40`.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    #[arg(long)]
    features_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    widths: Widths,
}

enum Failure {
    Usage(String),
    Audit(String),
    Diverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } | Error::NonFiniteGradient { .. } => Failure::Diverged(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn base_config(cli: &Cli) -> Result<TrainConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => TrainConfig::from_json_file(path)?,
        None => TrainConfig::new(Architecture::CgPcnn, vec![26, 40]),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_widths(cfg: &mut TrainConfig, w: &Widths) {
    if let Some(c) = w.channels {
        cfg.channels = c;
    }
    if let Some(c) = w.head_channels {
        cfg.head_channels = c;
    }
    if let Some(c) = w.embedding_dim {
        cfg.embedding_dim = c;
    }
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))
}

fn parse_pair(s: &str) -> Result<Vec<usize>, Failure> {
    s.split('+')
        .map(|m| m.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("bad feature pair {s:?}, expected e.g. 26+40")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Synth {
            speakers,
            utterances,
            train_per_speaker,
        } => {
            let mut cfg = SynthCorpusConfig {
                n_speakers: *speakers,
                utterances_per_speaker: *utterances,
                train_per_speaker: *train_per_speaker,
                ..Default::default()
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            create_dir(&cli.out_dir)?;
            let corpus = synth_speaker_corpus(&cfg, &cli.out_dir)?;
            println!(
                "wrote {} utterances of {} speakers to {}",
                corpus.records.len(),
                speakers,
                cli.out_dir.display()
            );
        }
        Command::Extract {
            manifest,
            dims,
            features_dir,
        } => {
            let records = read_manifest(manifest)?;
            let dir = features_dir.clone().unwrap_or_else(|| cli.out_dir.join("features"));
            let n = extract_to_dir(&records, parent_dir(manifest), dims, &dir)?;
            println!("wrote {n} feature files to {}", dir.display());
        }
        Command::Train(args) => {
            let mut cfg = base_config(&cli)?;
            if let Some(a) = args.architecture {
                cfg.architecture = a;
            }
            if let Some(f) = &args.features {
                cfg.feature_pair = f.clone();
            }
            if let Some(e) = args.epochs {
                cfg.epochs = e;
            }
            if let Some(b) = args.batch_size {
                cfg.batch_size = b;
            }
            if let Some(p) = &args.train_manifest {
                cfg.train_manifest = p.clone();
            }
            if let Some(p) = &args.test_manifest {
                cfg.test_manifest = Some(p.clone());
            }
            if let Some(p) = &args.features_dir {
                cfg.features_dir = p.clone();
            }
            if let Some(p) = &args.checkpoint {
                cfg.checkpoint = p.clone();
            }
            if cfg.checkpoint.as_os_str().is_empty() {
                cfg.checkpoint = cli.out_dir.join("model.cgpn");
            }
            apply_widths(&mut cfg, &args.widths);
            cfg.validate()?;
            let trained = train(&cfg)?;
            let r = &trained.result;
            println!(
                "{} {} seed {}: train SRR {:.2}%, test SRR {}, best epoch {}, {:.1}s",
                r.architecture.label(),
                features_label(&r.feature_pair),
                r.seed,
                r.train_accuracy,
                r.test_accuracy.map_or("n/a".into(), |a| format!("{a:.2}%")),
                r.best_epoch,
                r.seconds
            );
            create_dir(&cli.out_dir)?;
            let path = cli.out_dir.join("train_result.json");
            let text = serde_json::to_string_pretty(r).map_err(|e| Failure::Usage(e.to_string()))?;
            std::fs::write(&path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        }
        Command::Eval {
            checkpoint,
            manifest,
            features_dir,
            snr_db,
            noise_seed,
        } => {
            let (net, _) = cgpcnn::experiment::load_network(checkpoint)?;
            let pair = net.spec.input_dims.clone();
            let source = match (snr_db, features_dir) {
                (None, Some(dir)) => FeatureSource::Files(dir),
                (noise, _) => FeatureSource::Audio {
                    base: parent_dir(manifest),
                    noise: noise.map(|snr_db| NoiseSpec {
                        snr_db,
                        seed: *noise_seed,
                    }),
                },
            };
            let srr = evaluate(checkpoint, manifest, &pair, source)?;
            match snr_db {
                Some(s) => println!("SRR {srr:.2}% at {s} dB SNR"),
                None => println!("SRR {srr:.2}%"),
            }
        }
        Command::Ablate {
            manifest,
            architectures,
            pairs,
            n_seeds,
            train_per_speaker,
            features_dir,
            widths,
            epochs,
        } => {
            let mut base = base_config(&cli)?;
            apply_widths(&mut base, widths);
            if let Some(e) = epochs {
                base.epochs = *e;
            }
            let pairs = pairs.iter().map(|p| parse_pair(p)).collect::<Result<Vec<_>, _>>()?;
            let cells = ablation_cells(&base, architectures, &pairs, *n_seeds)?;
            let mut dims: Vec<usize> = pairs.iter().flatten().copied().collect();
            dims.sort();
            dims.dedup();
            let records = read_manifest(manifest)?;
            let cache = match features_dir {
                Some(dir) => FeatureCache::load(&records, &dims, dir)?,
                None => {
                    let data = Dataset::from_audio(&records, &speakers_of(&records), &dims, parent_dir(manifest), None)?;
                    let mut cache = FeatureCache::empty();
                    for ex in data.examples {
                        for (m, f) in dims.iter().zip(ex.features) {
                            cache.insert(&ex.id, *m, f);
                        }
                    }
                    cache
                }
            };
            let results = run_cells(&cells, |cfg| {
                let r = run_resplit_cell(cfg, &records, *train_per_speaker, &cache)?;
                println!(
                    "{} {} seed {}: test SRR {:.2}%",
                    r.architecture.label(),
                    features_label(&r.feature_pair),
                    r.seed,
                    r.test_accuracy.unwrap_or(f64::NAN)
                );
                Ok(r)
            })?;
            let rows: Vec<ResultRow> = results.iter().map(ResultRow::from).collect();
            let summary = summarize(&rows);
            create_dir(&cli.out_dir)?;
            write_results_csv(&cli.out_dir.join("results.csv"), &rows)?;
            write_summary_csv(&cli.out_dir.join("summary.csv"), &summary)?;
            for s in summary {
                println!("{:<8} {:<6} {:6.2} ± {:.2}", s.network, s.features, s.mean, s.std);
            }
        }
        Command::Gradcheck { seeds, inject_fault } => {
            let fault = match inject_fault.as_deref() {
                None => None,
                Some("conv-sign") => Some(Fault::ConvBackwardSignFlip),
                Some(other) => return Err(Failure::Usage(format!("unknown fault {other:?}"))),
            };
            let seeds: Vec<u64> = (1..=*seeds).collect();
            let suite = gradcheck_suite(&seeds, fault)?;
            for line in &suite.lines {
                let verdict = if line.max_rel_error < GRADCHECK_THRESHOLD { "ok" } else { "FAIL" };
                println!(
                    "{:<24} max rel err {:.3e} over {:>6} coords  {verdict}",
                    line.name, line.max_rel_error, line.coordinates
                );
            }
            if !suite.passed(GRADCHECK_THRESHOLD) {
                return Err(Failure::Audit(format!(
                    "gradient check failed: max relative error {:.3e} >= {GRADCHECK_THRESHOLD:e}",
                    suite.max_rel_error()
                )));
            }
        }
        Command::ShapeAudit {
            m1,
            m2,
            frames,
            speakers,
        } => {
            let audit = shape_audit(*m1, *m2, *frames, *speakers)?;
            for line in &audit.lines {
                println!("{line}");
            }
            println!("chain: {}", audit.chain);
            if !audit.matches_reference() {
                return Err(Failure::Audit(format!(
                    "shape chain differs from reference: expected {REFERENCE_CHAIN} and {speakers} logits"
                )));
            }
            println!("matches reference chain");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Audit(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_AUDIT)
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("diverged: {msg}");
            ExitCode::from(EXIT_DIVERGED)
        }
    }
}
