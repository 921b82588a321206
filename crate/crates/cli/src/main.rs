//! `mirrorself` command line: run trials and suites, train the learned
//! components, serve a live session and replay recorded traces into it.
//!
//! Exit codes: 0 ok, 1 configuration or usage error, 2 runtime error.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use mirrorself::contingency::write_dataset_csv;
use mirrorself::harness::plots::emit_plots;
use mirrorself::harness::practice::{contingency_prior, train_prior, waving_dataset};
use mirrorself::harness::session::{replay_client, run_replay, serve, ReplayInjector};
use mirrorself::harness::suite::write_curve;
use mirrorself::harness::trace::{read_trace_file, write_trace_file};
use mirrorself::harness::{run_suite, run_trial, RunSummary, ScenarioConfig, ScenarioKind};
use mirrorself::inference::GradientVariant;
use mirrorself::mdn::Mdn;
use mirrorself::rng::{derive_seed, rng_from, stream};

#[derive(Parser)]
#[command(name = "mirrorself", version, about = "Self/other distinction by active inference in a simulated mirror test")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// TOML scenario file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed (the master seed for suites).
    #[arg(long)]
    seed: Option<u64>,
    /// mirror, twin_async, twin_sync, scripted_other or interactive_other.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    gradient_variant: Option<Variant>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Jacobian,
    Likelihood,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial; writes trace.csv, summary.json and plots.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run positions × repeats trials; writes report.json and traces.
    Suite {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        positions: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
    },
    /// Train the forward model on a mirror waving dataset.
    TrainMdn {
        #[command(flatten)]
        common: Common,
        /// Dataset size; defaults to the training batch size.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train the contingency prior from practice waving.
    TrainContingency {
        #[command(flatten)]
        common: Common,
    },
    /// Serve an interactive_other trial on 127.0.0.1:PORT.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 7878)]
        port: u16,
    },
    /// Replay a recorded trace's actions as the other agent, optionally lagged.
    /// With --port, acts as a client of a running server.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Trace CSV whose action columns are replayed.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        lag_s: f64,
        #[arg(long)]
        port: Option<u16>,
    },
}

fn load_config(c: &Common, default_kind: Option<ScenarioKind>) -> mirrorself::Result<ScenarioConfig> {
    let mut cfg = match &c.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::for_kind(default_kind.unwrap_or(ScenarioKind::Mirror)),
    };
    if let Some(name) = &c.scenario {
        cfg.kind = name
            .parse()
            .map_err(|_| mirrorself::Error::Config {
                path: "scenario".into(),
                message: format!("unknown scenario `{name}`"),
            })?;
    } else if c.config.is_none() {
        if let Some(k) = default_kind {
            cfg.kind = k;
        }
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(v) = c.gradient_variant {
        cfg.inference.gradient_variant = match v {
            Variant::Jacobian => GradientVariant::Jacobian,
            Variant::Likelihood => GradientVariant::Likelihood,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_interactive(cfg: &ScenarioConfig) -> mirrorself::Result<()> {
    if cfg.kind != ScenarioKind::InteractiveOther {
        return Err(mirrorself::Error::Config {
            path: "kind".into(),
            message: format!("this command needs interactive_other, not {}", cfg.kind.name()),
        });
    }
    Ok(())
}

fn out_dir(c: &Common, default: &str) -> anyhow::Result<PathBuf> {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_summary(s: &RunSummary) {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    println!(
        "status {}  decided after {} s of evaluation  mean p_self {}  settled p_self {}  samples {}",
        s.status.name(),
        opt(s.time_to_decision_s),
        opt(s.mean_p_self),
        opt(s.settled_p_self),
        s.samples_collected
    );
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { common } => {
            let cfg = load_config(&common, None)?;
            let dir = out_dir(&common, "out/run")?;
            let clf = Arc::new(contingency_prior(&cfg)?);
            let mut out = run_trial(&cfg, clf)?;
            write_trace_file(&out.trace, &dir.join("trace.csv"))?;
            if !out.training_curve.is_empty() {
                write_curve(&out.training_curve, &dir.join("loss.csv"))?;
                out.summary.training_curve_file = Some("loss.csv".into());
            }
            emit_plots(&out.trace, &dir)?;
            write_json(&out.summary, &dir.join("summary.json"))?;
            print_summary(&out.summary);
        }
        Command::Suite {
            common,
            positions,
            repeats,
        } => {
            let cfg = load_config(&common, None)?;
            let dir = out_dir(&common, "out/suite")?;
            let clf = Arc::new(contingency_prior(&cfg)?);
            let report = run_suite(&cfg, positions, repeats, clf, Some(&dir.join("traces")))?;
            report.write(&dir.join("report.json"))?;
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
            println!(
                "{}: {} self, {} other of {} (expected {}, success {:.2}), {} failed, settled p_self {}, evaluation p_self {}, max {}",
                report.scenario,
                report.self_count,
                report.other_count,
                report.trials.len(),
                report.expected_status.name(),
                report.success_rate,
                report.failed,
                opt(report.mean_settled_p_self),
                opt(report.mean_evaluation_p_self),
                opt(report.max_evaluation_p_self)
            );
        }
        Command::TrainMdn { common, samples } => {
            let cfg = load_config(&common, None)?;
            let dir = out_dir(&common, "out/mdn")?;
            let n = samples.unwrap_or(cfg.mdn.batch_size);
            let data = waving_dataset(&cfg.world, derive_seed(cfg.seed, &[stream::DATASET]), n)?;
            let mut mdn = Mdn::new(cfg.mdn.network(), &mut rng_from(derive_seed(cfg.seed, &[stream::MDN_INIT])))?;
            let curve = mdn.train(&data, cfg.mdn.epochs, cfg.mdn.batch_size, cfg.mdn.adam)?;
            mdn.save(&dir.join("mdn.weights"))?;
            write_curve(&curve, &dir.join("loss.csv"))?;
            let first = curve[0];
            let last = *curve.last().expect("curve has epochs + 1 entries");
            println!("loss {first:.4} -> {last:.4} over {} epochs ({} samples)", curve.len() - 1, data.len());
            if let Some(&at400) = curve.get(400) {
                if first > last {
                    println!("fraction of the decrease reached by epoch 400: {:.3}", (first - at400) / (first - last));
                }
            }
        }
        Command::TrainContingency { common } => {
            let cfg = load_config(&common, None)?;
            let dir = out_dir(&common, "out/contingency")?;
            let (clf, report, data) = train_prior(&cfg)?;
            clf.save(&dir.join("contingency.weights"))?;
            let path = dir.join("dataset.csv");
            let f = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            write_dataset_csv(&data, std::io::BufWriter::new(f))?;
            write_curve(&report.curve, &dir.join("loss.csv"))?;
            println!(
                "train {} / holdout {} samples, accuracy {:.3} / {:.3}, mean p on noise {:.3}",
                report.train_samples,
                report.holdout_samples,
                report.train_accuracy,
                report.holdout_accuracy,
                report.noise_mean_prob
            );
        }
        Command::Serve { common, port } => {
            let cfg = load_config(&common, Some(ScenarioKind::InteractiveOther))?;
            require_interactive(&cfg)?;
            let clf = Arc::new(contingency_prior(&cfg)?);
            let listener =
                TcpListener::bind(("127.0.0.1", port)).with_context(|| format!("binding 127.0.0.1:{port}"))?;
            println!("listening on {}", listener.local_addr()?);
            let out = serve(&cfg, clf, &listener)?;
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                write_trace_file(&out.trace, &dir.join("trace.csv"))?;
                write_json(&out.summary, &dir.join("summary.json"))?;
            }
            print_summary(&out.summary);
        }
        Command::Replay {
            common,
            trace,
            lag_s,
            port,
        } => {
            if !(lag_s >= 0.0 && lag_s.is_finite()) {
                return Err(mirrorself::Error::Config {
                    path: "lag_s".into(),
                    message: "must be finite and non-negative".into(),
                }
                .into());
            }
            let cfg = load_config(&common, Some(ScenarioKind::InteractiveOther))?;
            require_interactive(&cfg)?;
            let recorded = read_trace_file(&trace)?;
            let inj = ReplayInjector::new(&recorded, lag_s, cfg.world.dt_s);
            match port {
                Some(p) => {
                    let frames = replay_client(&format!("127.0.0.1:{p}"), &inj)?;
                    let last = frames.last();
                    println!(
                        "{} frames, final status {}, p_self {:.3}",
                        frames.len(),
                        last.map(|f| f.status.name()).unwrap_or("-"),
                        last.map(|f| f.p_self).unwrap_or(0.0)
                    );
                }
                None => {
                    let clf = Arc::new(contingency_prior(&cfg)?);
                    let out = run_replay(&cfg, clf, &inj)?;
                    if let Some(dir) = &common.out {
                        std::fs::create_dir_all(dir)?;
                        write_trace_file(&out.trace, &dir.join("trace.csv"))?;
                        write_json(&out.summary, &dir.join("summary.json"))?;
                    }
                    print_summary(&out.summary);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already carry their cause in the message.
            let lib = e.downcast_ref::<mirrorself::Error>();
            match lib {
                Some(inner) => eprintln!("error: {inner}"),
                None => eprintln!("error: {e:#}"),
            }
            let config = lib.is_some_and(|e| e.is_config());
            ExitCode::from(if config { 1 } else { 2 })
        }
    }
}
