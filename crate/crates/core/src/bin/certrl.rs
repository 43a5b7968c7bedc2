use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use certrl::attack::AttackKind;
use certrl::certify::CertConfig;
use certrl::harness::{
    cmd_attack, cmd_certify, cmd_report, cmd_train, cmd_verify, AttackArgs, CertifyArgs, ModelSource, PolicySource,
    ReportArgs,
};
use certrl::train::TrainConfig;
use certrl::Error;

const EXIT_ERROR: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "certrl", version, about = "Certified worst-case reward for RL policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and dynamics model.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
    /// Estimate WCAR and write a certificate bundle.
    Certify {
        #[command(flatten)]
        cert: CertFlags,
        /// Policy checkpoint, or `identity`.
        #[arg(long)]
        policy: String,
        /// Learned model checkpoint, or `exact` to use the environment.
        #[arg(long, default_value = "exact")]
        model: String,
        #[arg(long)]
        delta_e: Option<f64>,
        #[arg(long, default_value = "cert")]
        out_dir: PathBuf,
    },
    /// Replay every certificate in a bundle.
    Verify {
        bundle: PathBuf,
        /// Check against this policy checkpoint instead of the bundled one.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Attacked returns in the true environment.
    Attack {
        #[arg(long)]
        env: String,
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Comma-separated subset of random, grid_corner, gradient_mad.
        #[arg(long, default_value = "random,grid_corner,gradient_mad")]
        attacks: String,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "attack")]
        out_dir: PathBuf,
    },
    /// WCAR and WCAR/T over horizons for a run directory or bundle.
    Report {
        run_dir: PathBuf,
        #[arg(long)]
        env: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20")]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct CertFlags {
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 5)]
    horizon: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Lib(Error),
    Verification(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("CERTRL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| Error::Config(format!("CERTRL_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<serde_json::Value, Failure> {
    configure_threads()?;
    match cli.command {
        Command::Train { config, seed, env, out_dir } => {
            let mut cfg = match config {
                Some(p) => TrainConfig::load(&p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = env {
                cfg.env = e;
            }
            let manifest = cmd_train(&cfg, &out_dir)?;
            Ok(serde_json::json!({ "command": "train", "out_dir": out_dir, "outputs": manifest.outputs.len() }))
        }
        Command::Certify { cert, policy, model, delta_e, out_dir } => {
            let args = CertifyArgs {
                env: cert.env,
                policy: PolicySource::parse(&policy),
                model: ModelSource::parse(&model),
                cert: CertConfig {
                    samples: cert.samples,
                    horizon: cert.horizon,
                    delta: cert.delta,
                    epsilon: cert.epsilon,
                },
                delta_e,
                seed: cert.seed,
                out_dir,
            };
            let (s, _) = cmd_certify(&args)?;
            Ok(serde_json::json!({
                "command": "certify",
                "bundle": args.out_dir.join(certrl::harness::BUNDLE_DIR),
                "samples": s.samples,
                "certified": s.certified,
                "wcar": s.wcar,
                "wcar_per_step": s.wcar_per_step,
                "bound": s.bound,
            }))
        }
        Command::Verify { bundle, policy } => {
            let report = cmd_verify(&bundle, policy.as_deref())?;
            if !report.passed() {
                return Err(Failure::Verification(report.failures));
            }
            Ok(serde_json::json!({ "command": "verify", "passed": true, "traces": report.traces_checked }))
        }
        Command::Attack {
            env,
            policy,
            epsilon,
            attacks,
            steps,
            step_size,
            episodes,
            horizon,
            seed,
            out_dir,
        } => {
            let kinds = attacks
                .split(',')
                .map(|s| s.trim().parse::<AttackKind>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(e.to_string()))?;
            let args = AttackArgs {
                env,
                policy: PolicySource::parse(&policy),
                kinds,
                epsilon,
                steps,
                step_size,
                episodes,
                horizon,
                seed,
                out_dir,
            };
            let (stats, _) = cmd_attack(&args)?;
            let rows: Vec<_> = stats
                .iter()
                .map(|s| serde_json::json!({ "attack": s.kind, "mean": s.mean, "std": s.std }))
                .collect();
            Ok(serde_json::json!({ "command": "attack", "results": rows }))
        }
        Command::Report { run_dir, env, horizons, samples, epsilon, delta, seed } => {
            let args = ReportArgs {
                run_dir,
                env,
                horizons,
                samples,
                epsilon,
                delta,
                seed,
            };
            let (report, _) = cmd_report(&args)?;
            Ok(serde_json::to_value(&report.rows).expect("rows serialize"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Verification(failures)) => {
            eprintln!("{}", serde_json::json!({ "error": "verification_failed", "failures": failures }));
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(if matches!(e, Error::Config(_)) { EXIT_CONFIG } else { EXIT_ERROR })
        }
    }
}
