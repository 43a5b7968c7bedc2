//! Experiment commands behind the `certrl` binary. Each command is a pure
//! function of its arguments and input files, and writes a JSON run manifest
//! next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attack::{attacked_return, AttackConfig, AttackKind, AttackStats};
use crate::certify::{
    bound_inputs, certified_bound, verify_bundle, wcar, write_bundle, BundleReport, BundleSummary, CertConfig,
    POLICY_FILE,
};
use crate::env::Mdp;
use crate::error::{Error, Result};
use crate::model::{measure_model_error, ExactModel, GaussianModel, GaussianPolicy, ModelChoice, TransitionDataset};
use crate::textio::{self, sha256_hex};
use crate::train::{log_to_csv, train, TrainConfig};

pub const MODEL_FILE: &str = "model.ckpt";
pub const ENV_DATA_FILE: &str = "env_data.txt";
pub const CONFIG_FILE: &str = "config.toml";
pub const LOG_FILE: &str = "train_log.csv";
pub const BUNDLE_DIR: &str = "bundle";
pub const ATTACK_JSON: &str = "attack.json";
pub const ATTACK_CSV: &str = "attack.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the manifest's directory unless absolute.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Provenance record of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub timings: Vec<Timing>,
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        Self {
            command: command.into(),
            version: VERSION.into(),
            config,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn file_name(command: &str) -> String {
        format!("manifest_{command}.json")
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let abs = fs::canonicalize(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(Artifact {
            sha256: hash_file(&abs)?,
            path: abs.display().to_string(),
        });
        Ok(())
    }

    /// Records `path` and, for directories, every file below it.
    fn output(&mut self, base: &Path, path: &Path) -> Result<()> {
        let mut files = Vec::new();
        if path.is_dir() {
            files_under(path, &mut files)?;
        } else {
            files.push(path.to_path_buf());
        }
        for f in files {
            let rel = f.strip_prefix(base).unwrap_or(&f);
            self.outputs.push(Artifact {
                path: rel.display().to_string(),
                sha256: hash_file(&f)?,
            });
        }
        Ok(())
    }

    fn time(&mut self, stage: &str, start: Instant) {
        self.timings.push(Timing {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.command));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        textio::write_string(&path, &(text + "\n"))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = textio::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse("manifest", path, e.to_string()))
    }

    /// Artifacts that are missing or whose content changed, resolved against
    /// the manifest directory `dir`.
    pub fn stale_artifacts(&self, dir: &Path) -> Vec<String> {
        self.inputs
            .iter()
            .chain(&self.outputs)
            .filter(|a| {
                let p = Path::new(&a.path);
                let p = if p.is_absolute() { p.to_path_buf() } else { dir.join(p) };
                hash_file(&p).map_or(true, |h| h != a.sha256)
            })
            .map(|a| a.path.clone())
            .collect()
    }
}

/// Trains a policy and model and writes them with the log, the environment
/// data and the resolved config into `out_dir`.
pub fn cmd_train(cfg: &TrainConfig, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let config = serde_json::to_value(cfg).expect("config serializes");
    let mut manifest = RunManifest::new("train", config, vec![cfg.seed]);
    let start = Instant::now();
    let out = train(cfg)?;
    manifest.time("train", start);

    let files = [POLICY_FILE, MODEL_FILE, ENV_DATA_FILE, CONFIG_FILE, LOG_FILE];
    out.policy.save(&out_dir.join(POLICY_FILE))?;
    out.model.save(&out_dir.join(MODEL_FILE))?;
    out.env_data.save(&out_dir.join(ENV_DATA_FILE))?;
    textio::write_string(&out_dir.join(CONFIG_FILE), &cfg.to_toml())?;
    textio::write_string(&out_dir.join(LOG_FILE), &log_to_csv(&out.log))?;
    for f in files {
        manifest.output(out_dir, &out_dir.join(f))?;
        if f == POLICY_FILE || f == MODEL_FILE {
            manifest.output(out_dir, &out_dir.join(format!("{f}.meta")))?;
        }
    }
    manifest.write(out_dir)?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicySource {
    /// `π(s) = s`, deterministic.
    Identity,
    Checkpoint(PathBuf),
}

impl PolicySource {
    pub fn parse(s: &str) -> Self {
        if s == "identity" {
            PolicySource::Identity
        } else {
            PolicySource::Checkpoint(PathBuf::from(s))
        }
    }

    /// Loads the policy; checkpoints are switched to deterministic actions.
    pub fn load(&self, env: &Mdp) -> Result<GaussianPolicy> {
        match self {
            PolicySource::Identity => GaussianPolicy::identity(env.state_dim()),
            PolicySource::Checkpoint(p) => Ok(GaussianPolicy::load(p)?.with_deterministic_eval(true)),
        }
    }

    fn record(&self, manifest: &mut RunManifest) -> Result<()> {
        if let PolicySource::Checkpoint(p) = self {
            manifest.input(p)?;
            manifest.input(&crate::model::meta_path(p))?;
        }
        Ok(())
    }

    fn describe(&self) -> String {
        match self {
            PolicySource::Identity => "identity".into(),
            PolicySource::Checkpoint(p) => p.display().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelSource {
    /// The environment itself, with `ε_E = 0`.
    Exact,
    /// A learned model checkpoint.
    Checkpoint(PathBuf),
}

impl ModelSource {
    pub fn parse(s: &str) -> Self {
        if s == "exact" {
            ModelSource::Exact
        } else {
            ModelSource::Checkpoint(PathBuf::from(s))
        }
    }

    fn describe(&self) -> String {
        match self {
            ModelSource::Exact => "exact".into(),
            ModelSource::Checkpoint(p) => p.display().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyArgs {
    pub env: String,
    pub policy: PolicySource,
    pub model: ModelSource,
    pub cert: CertConfig,
    /// Re-measures the model error radius at this confidence from the
    /// held-out part of the training data stored beside a learned model.
    pub delta_e: Option<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn recalibrate(model: &mut GaussianModel, model_path: &Path, delta_e: f64, manifest: &mut RunManifest) -> Result<()> {
    let dir = model_path.parent().unwrap_or(Path::new("."));
    let (cfg_path, data_path) = (dir.join(CONFIG_FILE), dir.join(ENV_DATA_FILE));
    if !cfg_path.exists() || !data_path.exists() {
        return Err(Error::Config(format!(
            "--delta-e needs {CONFIG_FILE} and {ENV_DATA_FILE} next to {}",
            model_path.display()
        )));
    }
    let cfg = TrainConfig::load(&cfg_path)?;
    let data = TransitionDataset::load(&data_path, cfg.data_capacity)?;
    let (_, held) = data.split_holdout(cfg.holdout_every);
    let err = measure_model_error(model, &held, delta_e)?;
    model.eps_e = err.eps_e;
    model.d_e = err.d_e;
    model.delta_e = delta_e;
    manifest.input(&cfg_path)?;
    manifest.input(&data_path)
}

/// Estimates WCAR and writes a certificate bundle to `out_dir/bundle`.
pub fn cmd_certify(args: &CertifyArgs) -> Result<(BundleSummary, RunManifest)> {
    args.cert.validate()?;
    let env = Mdp::by_name(&args.env).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(d) = args.delta_e {
        if !(0.0..1.0).contains(&d) {
            return Err(Error::Config(format!("delta_e must lie in [0, 1), got {d}")));
        }
    }
    let config = serde_json::json!({
        "env": args.env,
        "policy": args.policy.describe(),
        "model": args.model.describe(),
        "samples": args.cert.samples,
        "horizon": args.cert.horizon,
        "delta": args.cert.delta,
        "epsilon": args.cert.epsilon,
        "delta_e": args.delta_e,
    });
    let mut manifest = RunManifest::new("certify", config, vec![args.seed]);
    args.policy.record(&mut manifest)?;
    let policy = args.policy.load(&env)?;
    let model = match &args.model {
        ModelSource::Exact => {
            if args.delta_e.is_some_and(|d| d != 0.0) {
                return Err(Error::Config("the exact model has delta_e = 0".into()));
            }
            ModelChoice::Exact(ExactModel::new(env.clone()))
        }
        ModelSource::Checkpoint(p) => {
            manifest.input(p)?;
            manifest.input(&crate::model::meta_path(p))?;
            let mut m = GaussianModel::load(p)?;
            if let Some(d) = args.delta_e {
                recalibrate(&mut m, p, d, &mut manifest)?;
            }
            ModelChoice::Learned(m)
        }
    };
    let dynamics = model.as_dynamics();
    if dynamics.state_dim() != env.state_dim() || policy.state_dim() != env.state_dim() {
        return Err(Error::Config(format!(
            "policy/model dimensions do not match environment {}",
            env.name()
        )));
    }

    let start = Instant::now();
    let result = wcar(&policy, dynamics, &env, &args.cert, args.seed)?;
    manifest.time("wcar", start);
    let start = Instant::now();
    let bundle = args.out_dir.join(BUNDLE_DIR);
    let summary = write_bundle(&bundle, &env, &policy, &model, &args.cert, args.seed, &result)?;
    manifest.time("write_bundle", start);
    manifest.output(&args.out_dir, &bundle)?;
    manifest.write(&args.out_dir)?;
    Ok((summary, manifest))
}

/// Replays every certificate in the bundle.
pub fn cmd_verify(bundle: &Path, policy: Option<&Path>) -> Result<BundleReport> {
    verify_bundle(bundle, policy)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackArgs {
    pub env: String,
    pub policy: PolicySource,
    pub kinds: Vec<AttackKind>,
    pub epsilon: f64,
    pub steps: usize,
    /// Defaults to `ε/4`.
    pub step_size: Option<f64>,
    pub episodes: usize,
    /// Episode length; the environment default when absent.
    pub horizon: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

const ATTACK_HEADER: &str = "attack,epsilon,episodes,horizon,mean,std";

/// Attacked returns in the true environment, one row per attack kind.
pub fn cmd_attack(args: &AttackArgs) -> Result<(Vec<AttackStats>, RunManifest)> {
    let mut env = Mdp::by_name(&args.env).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(h) = args.horizon {
        if h == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        env = env.with_horizon(h);
    }
    if !(args.epsilon >= 0.0) || !args.epsilon.is_finite() {
        return Err(Error::Config(format!("epsilon must be finite and >= 0, got {}", args.epsilon)));
    }
    if args.episodes == 0 || args.kinds.is_empty() {
        return Err(Error::Config("need at least one episode and one attack".into()));
    }
    let config = serde_json::json!({
        "env": args.env,
        "policy": args.policy.describe(),
        "attacks": args.kinds.iter().map(|k| k.name()).collect::<Vec<_>>(),
        "epsilon": args.epsilon,
        "steps": args.steps,
        "step_size": args.step_size,
        "episodes": args.episodes,
        "horizon": env.horizon(),
    });
    let mut manifest = RunManifest::new("attack", config, vec![args.seed]);
    args.policy.record(&mut manifest)?;
    let policy = args.policy.load(&env)?;
    if policy.state_dim() != env.state_dim() {
        return Err(Error::Config(format!("policy does not match environment {}", env.name())));
    }
    let mut stats = Vec::with_capacity(args.kinds.len());
    let mut csv = format!("{ATTACK_HEADER}\n");
    for &kind in &args.kinds {
        let mut cfg = AttackConfig::new(kind, args.epsilon);
        cfg.steps = args.steps;
        if let Some(s) = args.step_size {
            cfg.step_size = s;
        }
        let start = Instant::now();
        let s = attacked_return(&policy, &env, &cfg, args.episodes, args.seed)?;
        manifest.time(kind.name(), start);
        csv.push_str(&format!(
            "{},{:.16e},{},{},{:.16e},{:.16e}\n",
            kind,
            s.epsilon,
            s.episodes,
            env.horizon(),
            s.mean,
            s.std
        ));
        stats.push(s);
    }
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    textio::write_string(&args.out_dir.join(ATTACK_JSON), &(json + "\n"))?;
    textio::write_string(&args.out_dir.join(ATTACK_CSV), &csv)?;
    manifest.output(&args.out_dir, &args.out_dir.join(ATTACK_JSON))?;
    manifest.output(&args.out_dir, &args.out_dir.join(ATTACK_CSV))?;
    manifest.write(&args.out_dir)?;
    Ok((stats, manifest))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportArgs {
    /// A training output directory or a certificate bundle.
    pub run_dir: PathBuf,
    /// Overrides the environment recorded in the run directory.
    pub env: Option<String>,
    pub horizons: Vec<usize>,
    pub samples: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub horizon: usize,
    pub samples: usize,
    pub epsilon: f64,
    pub certified: usize,
    pub wcar: f64,
    pub wcar_per_step: f64,
    pub certified_mean: f64,
    pub variance: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub env: String,
    pub model_kind: String,
    pub policy_fingerprint: String,
    pub rows: Vec<ReportRow>,
    /// Attack results found in the run directory.
    pub attacks: Option<serde_json::Value>,
}

pub const REPORT_HEADER: &str = "horizon,samples,epsilon,certified,wcar,wcar_per_step,certified_mean,variance,bound";

fn report_env(args: &ReportArgs) -> Result<String> {
    if let Some(e) = &args.env {
        return Ok(e.clone());
    }
    let summary = args.run_dir.join(crate::certify::SUMMARY_FILE);
    if summary.exists() {
        return Ok(BundleSummary::load(&args.run_dir)?.env);
    }
    let cfg = args.run_dir.join(CONFIG_FILE);
    if cfg.exists() {
        return Ok(TrainConfig::load(&cfg)?.env);
    }
    Err(Error::Config(format!(
        "cannot tell the environment of {}; pass --env",
        args.run_dir.display()
    )))
}

/// WCAR and WCAR/T over a range of horizons for the policy and model in
/// `run_dir`. Refuses to run when a manifest there lists stale artifacts.
pub fn cmd_report(args: &ReportArgs) -> Result<(Report, RunManifest)> {
    if args.horizons.is_empty() {
        return Err(Error::Config("need at least one horizon".into()));
    }
    for m in fs::read_dir(&args.run_dir).map_err(|e| Error::io(&args.run_dir, e))? {
        let p = m.map_err(|e| Error::io(&args.run_dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("manifest_") && name.ends_with(".json") && name != "manifest_report.json" {
            let stale = RunManifest::load(&p)?.stale_artifacts(&args.run_dir);
            if !stale.is_empty() {
                return Err(Error::MetadataMismatch(format!("{name} lists changed files: {}", stale.join(", "))));
            }
        }
    }
    let env = Mdp::by_name(&report_env(args)?).map_err(|e| Error::Config(e.to_string()))?;
    let policy_path = args.run_dir.join(POLICY_FILE);
    let policy = GaussianPolicy::load(&policy_path)?.with_deterministic_eval(true);
    let model = if args.run_dir.join(MODEL_FILE).exists() || args.run_dir.join("exact_model.txt").exists() {
        ModelChoice::load_from(&args.run_dir)?
    } else {
        ModelChoice::Exact(ExactModel::new(env.clone()))
    };
    let dynamics = model.as_dynamics();
    let config = serde_json::json!({
        "run_dir": args.run_dir.display().to_string(),
        "env": env.name(),
        "horizons": args.horizons,
        "samples": args.samples,
        "epsilon": args.epsilon,
        "delta": args.delta,
    });
    let mut manifest = RunManifest::new("report", config, vec![args.seed]);
    manifest.input(&policy_path)?;

    let mut rows = Vec::with_capacity(args.horizons.len());
    let mut csv = format!("{REPORT_HEADER}\n");
    for &horizon in &args.horizons {
        let cfg = CertConfig {
            samples: args.samples,
            horizon,
            delta: args.delta,
            epsilon: args.epsilon,
        };
        let start = Instant::now();
        let result = wcar(&policy, dynamics, &env, &cfg, args.seed)?;
        manifest.time(&format!("wcar_T{horizon}"), start);
        let row = ReportRow {
            horizon,
            samples: args.samples,
            epsilon: args.epsilon,
            certified: result.certified(),
            wcar: result.mean,
            wcar_per_step: result.mean / horizon as f64,
            certified_mean: result.certified_mean,
            variance: result.variance,
            bound: certified_bound(&bound_inputs(&result, &policy, dynamics, &cfg))?,
        };
        csv.push_str(&format!(
            "{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            row.horizon,
            row.samples,
            row.epsilon,
            row.certified,
            row.wcar,
            row.wcar_per_step,
            row.certified_mean,
            row.variance,
            row.bound
        ));
        rows.push(row);
    }
    let attack_path = args.run_dir.join(ATTACK_JSON);
    let attacks = if attack_path.exists() {
        let text = textio::read_to_string(&attack_path)?;
        Some(serde_json::from_str(&text).map_err(|e| Error::parse("attack report", &attack_path, e.to_string()))?)
    } else {
        None
    };
    let report = Report {
        env: env.name().into(),
        model_kind: dynamics.kind(),
        policy_fingerprint: policy.fingerprint(),
        rows,
        attacks,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    textio::write_string(&args.run_dir.join(REPORT_JSON), &(json + "\n"))?;
    textio::write_string(&args.run_dir.join(REPORT_CSV), &csv)?;
    manifest.output(&args.run_dir, &args.run_dir.join(REPORT_JSON))?;
    manifest.output(&args.run_dir, &args.run_dir.join(REPORT_CSV))?;
    manifest.write(&args.run_dir)?;
    Ok((report, manifest))
}
