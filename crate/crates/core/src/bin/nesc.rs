use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nesc_core::config::ExperimentConfig;
use nesc_core::controllers::ControllerKind;
use nesc_core::experiments::{
    manifest, run_bilinear, run_counterexample, run_experiment, run_fixed_demand, run_noise_study, run_validate,
    ValidationHooks,
};
use nesc_core::Error;

/// Exit status when an invariant or acceptance check fails.
const EXIT_INVARIANT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "nesc", version, about = "Payoff-feedback Nash equilibrium seeking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random frequencies and measurement noise.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the controller named in the config.
    Run {
        #[command(flatten)]
        common: Common,
        /// Measurement noise level.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// NESC against both baselines on the bilinear game.
    Bilinear {
        #[command(flatten)]
        common: Common,
    },
    /// The fixed-demand market.
    FixedDemand {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Repeated noisy market runs and price histograms.
    NoiseStudy {
        #[command(flatten)]
        common: Common,
        /// Single noise level in place of `study.sigmas`.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Projected-flow instance on which the Lyapunov function increases.
    Counterexample {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite and print a pass/fail table.
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Negate cost measurements in the averaging checks (negative control).
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
        /// Probe an anti-monotone game (negative control).
        #[arg(long, hide = true)]
        inject_non_monotone: bool,
    },
}

fn load(common: &Common, preset: &str) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::preset(preset)?,
    };
    if let Some(seed) = common.seed {
        cfg.solver.seed = seed;
        cfg.noise.seed = seed;
    }
    if let Some(dir) = &common.out {
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Error> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn execute(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run { common, sigma } => {
            let mut cfg = load(&common, "bilinear")?;
            if let Some(s) = sigma {
                cfg.noise.sigma = s;
            }
            let out = run_experiment(&cfg)?;
            let dir = &cfg.output_dir;
            out.trajectory.write_csv(create(dir, "trajectory.csv")?)?;
            write_text(dir, "manifest.txt", &out.manifest())?;
            println!("controller {} steps_recorded {}", cfg.controller, out.trajectory.len());
            if let Some(r) = out.trajectory.channel("ne_residual") {
                println!("final_residual {:.6}", r.last().copied().unwrap_or(f64::NAN));
            }
            Ok(match out.trajectory.diverged_at {
                Some(t) => {
                    eprintln!("diverged at t = {t}");
                    EXIT_DIVERGED
                }
                None => 0,
            })
        }
        Command::Bilinear { common } => {
            let cfg = load(&common, "bilinear")?;
            let report = run_bilinear(&cfg)?;
            let dir = &cfg.output_dir;
            let mut summary = String::new();
            for (run, s) in report.runs.iter().zip(&report.summaries) {
                run.trajectory
                    .write_csv(create(dir, &format!("bilinear_{}.csv", s.controller))?)?;
                summary.push_str(&format!("{s}\n"));
            }
            let nesc = report.run(ControllerKind::Nesc).expect("nesc is always run");
            write_text(dir, "manifest.txt", &manifest(&cfg, &nesc.params))?;
            write_text(dir, "summary.txt", &summary)?;
            print!("{summary}");
            // the baselines are expected to fail; only a diverging NESC run is an error
            Ok(if nesc.trajectory.diverged() { EXIT_DIVERGED } else { 0 })
        }
        Command::FixedDemand { common, sigma } => {
            let cfg = load(&common, "fixed-demand")?;
            let report = run_fixed_demand(&cfg, sigma.unwrap_or(cfg.noise.sigma))?;
            let dir = &cfg.output_dir;
            report.output.trajectory.write_csv(create(dir, "fixed_demand.csv")?)?;
            write_text(dir, "manifest.txt", &report.output.manifest())?;
            let text = format!("{report}\n");
            write_text(dir, "summary.txt", &text)?;
            print!("{text}");
            Ok(0)
        }
        Command::NoiseStudy { common, sigma } => {
            let cfg = load(&common, "fixed-demand")?;
            let sigmas = match sigma {
                Some(s) => vec![s],
                None => cfg.study.sigmas.clone(),
            };
            let report = run_noise_study(&cfg, &sigmas)?;
            let dir = &cfg.output_dir;
            for r in &report.results {
                r.histogram.write_csv(create(dir, &format!("histogram_sigma_{}.csv", r.sigma))?)?;
            }
            let game = cfg.game.build()?;
            write_text(dir, "manifest.txt", &manifest(&cfg, &cfg.esc_params(&game)?))?;
            let text = report.to_string();
            write_text(dir, "summary.txt", &text)?;
            print!("{text}");
            Ok(0)
        }
        Command::Counterexample { out } => {
            let report = run_counterexample()?;
            let text = format!("{report}\n");
            if let Some(dir) = out {
                report.trajectory.write_csv(create(&dir, "counterexample.csv")?)?;
                write_text(&dir, "summary.txt", &text)?;
            }
            print!("{text}");
            Ok(if report.control_rate <= 0.0 { 0 } else { EXIT_INVARIANT })
        }
        Command::Validate {
            out,
            inject_sign_flip,
            inject_non_monotone,
        } => {
            let report = run_validate(ValidationHooks {
                flip_estimate_sign: inject_sign_flip,
                non_monotone_game: inject_non_monotone,
            })?;
            let text = report.to_string();
            if let Some(dir) = out {
                write_text(&dir, "validate.tsv", &text)?;
            }
            print!("{text}");
            Ok(if report.passed() { 0 } else { EXIT_INVARIANT })
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Integration(_) => EXIT_DIVERGED,
        Error::Io(_) => EXIT_INVARIANT,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
