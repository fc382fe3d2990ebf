use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use eventransact::events_io::{synth_stream, Pattern, SynthParams};
use eventransact::frames::EncoderConfig;
use eventransact::gradcheck::{self, GradcheckConfig};
use eventransact::harness::{
    read_event_file, run_bench, run_eval, run_prepare_dvs, run_synth, run_train, DvsProtocol, HarnessError, RunConfig,
    SynthSpec, RESOLVED_CONFIG_FILE,
};
use eventransact::pipeline::{MIN_TRIALS, MIN_WARMUP};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "eventransact", version, about = "Event-camera action recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    #[value(name = "10_class")]
    Ten,
    #[value(name = "11_class")]
    Eleven,
}

#[derive(Subcommand)]
enum Command {
    /// Write a deterministic synthetic corpus with train/test manifests.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated pattern names; all patterns when omitted.
        #[arg(long, value_delimiter = ',')]
        patterns: Vec<String>,
        #[arg(long, default_value_t = 8)]
        train_per_class: usize,
        #[arg(long, default_value_t = 4)]
        test_per_class: usize,
        #[arg(long, default_value_t = 128)]
        width: u16,
        #[arg(long, default_value_t = 128)]
        height: u16,
        #[arg(long, default_value_t = 1_000_000)]
        duration_usec: u64,
        /// Mean events per microsecond.
        #[arg(long, default_value_t = 0.02)]
        rate: f64,
    },
    /// Build DVS Gesture manifests, optionally caching every segment.
    Prepare {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "11_class")]
        protocol: Protocol,
        /// Write each segment as its own event file.
        #[arg(long)]
        cache: bool,
        /// Frame side recorded with the cache.
        #[arg(long, default_value_t = 64)]
        spatial_size: usize,
    },
    /// Train from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        clips: usize,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time preprocessing and a batch-1 forward pass.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Event file to time on; a synthetic stream when omitted.
        #[arg(long)]
        sample: Option<PathBuf>,
        #[arg(long, default_value_t = MIN_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = MIN_WARMUP)]
        warmup: usize,
    },
    /// Finite-difference check of every parameter gradient.
    Gradcheck {
        /// JSON gradcheck config; the tiny model when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct Failure {
    kind: &'static str,
    message: String,
    fields: Value,
}

impl Failure {
    fn new(kind: &'static str, message: impl ToString) -> Self {
        Self {
            kind,
            message: message.to_string(),
            fields: json!({}),
        }
    }

    fn line(&self) -> String {
        let mut v = json!({ "error": self.kind, "message": self.message });
        if let (Some(obj), Some(extra)) = (v.as_object_mut(), self.fields.as_object()) {
            obj.extend(extra.clone());
        }
        v.to_string()
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let message = e.to_string();
        match e {
            HarnessError::Config { file, json_path, .. } => Self {
                kind: "config",
                message,
                fields: json!({ "file": file, "json_path": json_path }),
            },
            HarnessError::Io { path, .. } => Self {
                kind: "io",
                message,
                fields: json!({ "path": path }),
            },
            HarnessError::MissingLabels(path) => Self {
                kind: "missing_labels",
                message,
                fields: json!({ "path": path }),
            },
            HarnessError::Manifest(_) | HarnessError::SubjectOverlap(_) => Self::new("manifest", message),
            HarnessError::Sample { .. } | HarnessError::Events(_) | HarnessError::Frames(_) => {
                Self::new("data", message)
            }
            HarnessError::Pipeline(_) => Self::new("pipeline", message),
        }
    }
}

fn print(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn synth(
    out: &Path,
    seed: u64,
    patterns: &[String],
    counts: (usize, usize),
    params: SynthParams,
) -> Result<(), Failure> {
    let patterns = if patterns.is_empty() {
        Pattern::ALL.to_vec()
    } else {
        patterns
            .iter()
            .map(|p| p.parse::<Pattern>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::new("usage", e))?
    };
    let spec = SynthSpec {
        patterns,
        train_per_class: counts.0,
        test_per_class: counts.1,
        params,
    };
    let (train, test) = run_synth(out, &spec, seed)?;
    print(&json!({
        "train_manifest": out.join("train.json"),
        "test_manifest": out.join("test.json"),
        "train_samples": train.samples.len(),
        "test_samples": test.samples.len(),
    }));
    Ok(())
}

fn gradcheck_cmd(config: Option<&Path>, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure {
                kind: "io",
                message: format!("{}: {e}", path.display()),
                fields: json!({ "path": path }),
            })?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| Failure {
                kind: "config",
                message: format!("{}: invalid config at `{}`: {}", path.display(), e.path(), e.inner()),
                fields: json!({ "file": path, "json_path": e.path().to_string() }),
            })?
        }
        None => GradcheckConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = gradcheck::run(&cfg).map_err(|e| Failure::new("gradcheck", e))?;
    let pass = report.max_rel_err <= GRADCHECK_TOLERANCE;
    print(&json!({
        "max_rel_err": report.max_rel_err,
        "worst_block": report.worst_block,
        "blocks": report.blocks.len(),
        "tolerance": GRADCHECK_TOLERANCE,
        "pass": pass,
        "wall_s": report.wall_s,
    }));
    if pass {
        Ok(())
    } else {
        Err(Failure {
            kind: "gradcheck",
            message: format!(
                "max relative error {:e} in `{}` exceeds {GRADCHECK_TOLERANCE:e}",
                report.max_rel_err, report.worst_block
            ),
            fields: json!({ "max_rel_err": report.max_rel_err }),
        })
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            patterns,
            train_per_class,
            test_per_class,
            width,
            height,
            duration_usec,
            rate,
        } => synth(
            &out,
            seed,
            &patterns,
            (train_per_class, test_per_class),
            SynthParams {
                width,
                height,
                duration_usec,
                rate,
            },
        ),
        Command::Prepare {
            root,
            out,
            protocol,
            cache,
            spatial_size,
        } => {
            let protocol = match protocol {
                Protocol::Ten => DvsProtocol::TenClass,
                Protocol::Eleven => DvsProtocol::ElevenClass,
            };
            let encoder = EncoderConfig {
                spatial_size,
                ..Default::default()
            };
            let (train, test) = run_prepare_dvs(&root, protocol, &out, cache.then_some(&encoder))?;
            print(&json!({
                "train_manifest": out.join("train.json"),
                "test_manifest": out.join("test.json"),
                "train_samples": train.samples.len(),
                "test_samples": test.samples.len(),
                "classes": train.class_names.len(),
            }));
            Ok(())
        }
        Command::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            print(&run_train(&cfg)?);
            Ok(())
        }
        Command::Eval {
            checkpoint,
            manifest,
            clips,
            out,
        } => {
            if clips == 0 {
                return Err(Failure::new("usage", "--clips must be >= 1"));
            }
            let report = run_eval(&checkpoint, &manifest, clips, out.as_deref())?;
            if let Some(path) = &out {
                let resolved = json!({ "checkpoint": checkpoint, "manifest": manifest, "clips": clips });
                let dir = path.parent().unwrap_or(Path::new("."));
                std::fs::write(dir.join(RESOLVED_CONFIG_FILE), resolved.to_string() + "\n")
                    .map_err(|e| Failure::new("io", format!("{}: {e}", dir.display())))?;
            }
            print(&report);
            Ok(())
        }
        Command::Bench {
            checkpoint,
            sample,
            trials,
            warmup,
        } => {
            let stream = match sample {
                Some(path) => read_event_file(&path).map_err(|e| Failure {
                    kind: "data",
                    message: e.to_string(),
                    fields: json!({ "path": path }),
                })?,
                None => {
                    synth_stream(Pattern::RotatingDot, &SynthParams::default(), 0)
                        .map_err(|e| Failure::new("data", e))?
                        .0
                }
            };
            print(&run_bench(&checkpoint, &stream, trials, warmup)?);
            Ok(())
        }
        Command::Gradcheck { config, seed } => gradcheck_cmd(config.as_deref(), seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or("").trim_start_matches("error: ");
            let f = Failure::new("usage", if first.is_empty() { message } else { first.to_string() });
            eprintln!("{}", f.line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(if f.kind == "usage" { 2 } else { 1 })
        }
    }
}
