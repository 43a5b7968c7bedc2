//! Certificate bundles: a directory holding the checkpoints that were
//! certified, one trace file per sample under `traces/`, and `summary.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::env::{Mdp, PerturbationSpec};
use crate::error::{Error, Result};
use crate::domain::IntervalBox;
use crate::model::{Dynamics, GaussianPolicy, ModelChoice};
use crate::textio::{self, fmt_f64, parse_f64, sha256_hex, Lines};

use super::bound::BoundInputs;
use super::format::{seal, trace_from_text, trace_to_text, unseal};
use super::rollout::{abstract_rollout_with_noise, AbstractTrace};
use super::verify::check_certificate;
use super::wcar::{bound_inputs, certified_bound, mean_and_variance, CertConfig, WcarResult};

pub const SUMMARY_FILE: &str = "summary.txt";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const TRACE_DIR: &str = "traces";

#[derive(Clone, Debug, PartialEq)]
pub enum BundleEntry {
    Trace { index: usize, file: String, sha256: String },
    NotCertifiable { index: usize, step: usize },
}

impl BundleEntry {
    fn index(&self) -> usize {
        match self {
            BundleEntry::Trace { index, .. } | BundleEntry::NotCertifiable { index, .. } => *index,
        }
    }
}

/// Contents of `summary.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleSummary {
    pub env: String,
    pub model_kind: String,
    pub policy_fingerprint: String,
    pub model_fingerprint: String,
    pub seed: u64,
    pub samples: usize,
    pub horizon: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub delta_e: f64,
    pub eps_e: f64,
    pub d_e: f64,
    pub l_e: f64,
    pub l_pi: f64,
    pub l_r: f64,
    pub certified: usize,
    pub wcar: f64,
    pub certified_mean: f64,
    pub variance: f64,
    pub wcar_per_step: f64,
    pub bound: f64,
    pub entries: Vec<BundleEntry>,
}

impl BundleSummary {
    pub fn cert_config(&self) -> CertConfig {
        CertConfig {
            samples: self.samples,
            horizon: self.horizon,
            delta: self.delta,
            epsilon: self.epsilon,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("certrl-summary 1\n");
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} {v}\n"));
        kv("env", self.env.clone());
        kv("model_kind", self.model_kind.clone());
        kv("policy_fingerprint", self.policy_fingerprint.clone());
        kv("model_fingerprint", self.model_fingerprint.clone());
        kv("seed", self.seed.to_string());
        kv("samples", self.samples.to_string());
        kv("horizon", self.horizon.to_string());
        for (k, v) in [
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("delta_e", self.delta_e),
            ("eps_e", self.eps_e),
            ("d_e", self.d_e),
            ("l_e", self.l_e),
            ("l_pi", self.l_pi),
            ("l_r", self.l_r),
        ] {
            kv(k, fmt_f64(v));
        }
        kv("certified", self.certified.to_string());
        for (k, v) in [
            ("wcar", self.wcar),
            ("certified_mean", self.certified_mean),
            ("variance", self.variance),
            ("wcar_per_step", self.wcar_per_step),
            ("probabilistic_bound", self.bound),
        ] {
            kv(k, fmt_f64(v));
        }
        for e in &self.entries {
            match e {
                BundleEntry::Trace { index, file, sha256 } => kv("trace", format!("{index} {file} {sha256}")),
                BundleEntry::NotCertifiable { index, step } => kv("not_certifiable", format!("{index} {step}")),
            }
        }
        seal(out)
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let parsed = (|| -> std::result::Result<Self, String> {
            let body = unseal(text)?;
            let mut lines = Lines::new(body);
            let mut one = |key: &str| -> std::result::Result<String, String> {
                match lines.expect(key)? {
                    (_, t) if t.len() == 1 => Ok(t[0].to_string()),
                    (no, _) => Err(format!("line {no}: expected one value for {key}")),
                }
            };
            if one("certrl-summary")? != "1" {
                return Err("unsupported summary version".into());
            }
            let env = one("env")?;
            let model_kind = one("model_kind")?;
            let policy_fingerprint = one("policy_fingerprint")?;
            let model_fingerprint = one("model_fingerprint")?;
            let int = |s: String| s.parse::<u64>().map_err(|e| format!("bad integer {s:?}: {e}"));
            let seed = int(one("seed")?)?;
            let samples = int(one("samples")?)? as usize;
            let horizon = int(one("horizon")?)? as usize;
            let mut float = |k: &str| parse_f64(&one(k)?);
            let epsilon = float("epsilon")?;
            let delta = float("delta")?;
            let delta_e = float("delta_e")?;
            let eps_e = float("eps_e")?;
            let d_e = float("d_e")?;
            let l_e = float("l_e")?;
            let l_pi = float("l_pi")?;
            let l_r = float("l_r")?;
            let certified = int(one("certified")?)? as usize;
            let mut float = |k: &str| parse_f64(&one(k)?);
            let wcar = float("wcar")?;
            let certified_mean = float("certified_mean")?;
            let variance = float("variance")?;
            let wcar_per_step = float("wcar_per_step")?;
            let bound = float("probabilistic_bound")?;
            let mut entries = Vec::new();
            while let Some((no, key, t)) = lines.next_record() {
                let idx = |s: &str| s.parse::<usize>().map_err(|e| format!("line {no}: {e}"));
                entries.push(match (key, t.as_slice()) {
                    ("trace", [i, f, h]) => BundleEntry::Trace {
                        index: idx(i)?,
                        file: f.to_string(),
                        sha256: h.to_string(),
                    },
                    ("not_certifiable", [i, s]) => BundleEntry::NotCertifiable {
                        index: idx(i)?,
                        step: idx(s)?,
                    },
                    _ => return Err(format!("line {no}: unexpected record {key}")),
                });
            }
            Ok(Self {
                env,
                model_kind,
                policy_fingerprint,
                model_fingerprint,
                seed,
                samples,
                horizon,
                epsilon,
                delta,
                delta_e,
                eps_e,
                d_e,
                l_e,
                l_pi,
                l_r,
                certified,
                wcar,
                certified_mean,
                variance,
                wcar_per_step,
                bound,
                entries,
            })
        })();
        parsed.map_err(|r| Error::parse("certificate summary", path, r))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        Self::from_text(&textio::read_to_string(&path)?, &path)
    }

    fn bound_inputs(&self) -> BoundInputs {
        BoundInputs {
            wcar_mean: self.wcar,
            wcar_variance: self.variance,
            samples: self.samples,
            delta: self.delta,
            delta_e: self.delta_e,
            horizon: self.horizon,
            l_e: self.l_e,
            l_pi: self.l_pi,
            l_r: self.l_r,
            d_e: self.d_e,
        }
    }
}

fn trace_file(index: usize) -> String {
    format!("{TRACE_DIR}/trace_{index:06}.txt")
}

/// Writes the bundle for a finished estimate and returns its summary.
#[allow(clippy::too_many_arguments)]
pub fn write_bundle(
    dir: &Path,
    env: &Mdp,
    policy: &GaussianPolicy,
    model: &ModelChoice,
    cfg: &CertConfig,
    seed: u64,
    result: &WcarResult,
) -> Result<BundleSummary> {
    let dynamics = model.as_dynamics();
    let traces = dir.join(TRACE_DIR);
    if traces.exists() {
        fs::remove_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
    }
    fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
    policy.save(&dir.join(POLICY_FILE))?;
    model.save_into(dir)?;
    let mut entries = Vec::with_capacity(result.outcomes.len());
    for outcome in &result.outcomes {
        match outcome {
            Ok(trace) => {
                let file = trace_file(trace.meta.index);
                let text = trace_to_text(trace);
                textio::write_string(&dir.join(&file), &text)?;
                entries.push(BundleEntry::Trace {
                    index: trace.meta.index,
                    file,
                    sha256: sha256_hex(text.as_bytes()),
                });
            }
            Err(nc) => entries.push(BundleEntry::NotCertifiable {
                index: nc.index,
                step: nc.step,
            }),
        }
    }
    let inputs = bound_inputs(result, policy, dynamics, cfg);
    let summary = BundleSummary {
        env: env.name().to_string(),
        model_kind: dynamics.kind(),
        policy_fingerprint: policy.fingerprint(),
        model_fingerprint: dynamics.fingerprint(),
        seed,
        samples: cfg.samples,
        horizon: cfg.horizon,
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        delta_e: inputs.delta_e,
        eps_e: dynamics.model_error(),
        d_e: inputs.d_e,
        l_e: inputs.l_e,
        l_pi: inputs.l_pi,
        l_r: inputs.l_r,
        certified: result.certified(),
        wcar: result.mean,
        certified_mean: result.certified_mean,
        variance: result.variance,
        wcar_per_step: result.mean / cfg.horizon as f64,
        bound: certified_bound(&inputs)?,
        entries,
    };
    textio::write_string(&dir.join(SUMMARY_FILE), &summary.to_text())?;
    Ok(summary)
}

/// Outcome of checking a bundle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BundleReport {
    pub traces_checked: usize,
    pub failures: Vec<String>,
}

impl BundleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn same_box(a: &IntervalBox, b: &IntervalBox) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    bits(a.center()) == bits(b.center()) && bits(a.deviation()) == bits(b.deviation())
}

/// Replay is deterministic, so a bundle written by this crate stores
/// exactly the replayed boxes. Containment alone would accept widened ones.
fn reproduces(trace: &AbstractTrace, policy: &GaussianPolicy, model: &dyn Dynamics, spec: &PerturbationSpec) -> bool {
    let Ok((steps, total)) = abstract_rollout_with_noise(policy, model, &trace.meta.initial_state, spec, &trace.noise)
    else {
        return false;
    };
    same_box(&total, &trace.total_reward)
        && steps.len() == trace.steps.len()
        && steps.iter().zip(&trace.steps).all(|(a, b)| {
            same_box(&a.state, &b.state)
                && same_box(&a.observed, &b.observed)
                && same_box(&a.action, &b.action)
                && same_box(&a.reward, &b.reward)
        })
}

/// Checks every trace and the summary of the bundle in `dir`. The policy is
/// read from the bundle unless `policy_path` names another checkpoint.
/// Content problems are reported as failures; missing inputs are errors.
pub fn verify_bundle(dir: &Path, policy_path: Option<&Path>) -> Result<BundleReport> {
    let mut report = BundleReport::default();
    let summary = match BundleSummary::load(dir) {
        Ok(s) => s,
        Err(e @ Error::Parse { .. }) => {
            report.failures.push(e.to_string());
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    let policy_path: PathBuf = policy_path.map_or_else(|| dir.join(POLICY_FILE), Path::to_path_buf);
    let policy = GaussianPolicy::load(&policy_path)?;
    let model = ModelChoice::load_from(dir)?;
    let dynamics = model.as_dynamics();
    let spec = PerturbationSpec::new(summary.epsilon)?;
    let mut fail = |msg: String| report.failures.push(msg);

    if summary.policy_fingerprint != policy.fingerprint() {
        fail("summary policy fingerprint differs from the policy checkpoint".into());
    }
    if summary.model_fingerprint != dynamics.fingerprint() || summary.model_kind != dynamics.kind() {
        fail("summary model does not match the bundled model".into());
    }
    if summary.entries.len() != summary.samples
        || summary.entries.iter().enumerate().any(|(i, e)| e.index() != i)
    {
        fail("summary entries do not cover samples 0..N in order".into());
    }

    let mut lower_bounds = Vec::new();
    let mut checked = 0;
    for entry in &summary.entries {
        let BundleEntry::Trace { index, file, sha256 } = entry else {
            continue;
        };
        let path = dir.join(file);
        let text = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) => {
                fail(format!("trace {index}: cannot read {}: {e}", path.display()));
                continue;
            }
        };
        if sha256_hex(&text) != *sha256 {
            fail(format!("trace {index}: file hash differs from summary"));
        }
        let trace = match std::str::from_utf8(&text)
            .map_err(|e| e.to_string())
            .and_then(|t| trace_from_text(t, &path).map_err(|e| e.to_string()))
        {
            Ok(t) => t,
            Err(e) => {
                fail(format!("trace {index}: {e}"));
                continue;
            }
        };
        checked += 1;
        if trace.meta.index != *index || trace.meta.seed != summary.seed || trace.meta.horizon != summary.horizon {
            fail(format!("trace {index}: metadata disagrees with summary"));
        }
        match check_certificate(&trace, &policy, dynamics, &spec) {
            Ok(Ok(())) if !reproduces(&trace, &policy, dynamics, &spec) => {
                fail(format!("trace {index}: stored boxes differ from the replay"))
            }
            Ok(Ok(())) => {}
            Ok(Err(rej)) => fail(format!("trace {index}: {rej}")),
            Err(e) => fail(format!("trace {index}: {e}")),
        }
        lower_bounds.push(trace.lower_bound());
    }

    let certified = summary.entries.iter().filter(|e| matches!(e, BundleEntry::Trace { .. })).count();
    let (cmean, var) = mean_and_variance(&lower_bounds);
    let mean = if certified == summary.entries.len() { cmean } else { f64::NAN };
    if summary.certified != certified
        || !same(summary.wcar, mean)
        || !same(summary.certified_mean, cmean)
        || !same(summary.variance, var)
        || !same(summary.wcar_per_step, mean / summary.horizon as f64)
    {
        fail("summary statistics do not match the traces".into());
    }
    let recomputed = BoundInputs {
        l_e: dynamics.lipschitz_upper(),
        l_pi: policy.mean_net.lipschitz_upper(),
        l_r: dynamics.reward_lipschitz(),
        d_e: dynamics.worst_residual(),
        delta_e: dynamics.model_error_confidence(),
        ..summary.bound_inputs()
    };
    if recomputed != summary.bound_inputs() || !same(dynamics.model_error(), summary.eps_e) {
        fail("summary bound inputs do not match the checkpoints".into());
    }
    match certified_bound(&summary.bound_inputs()) {
        Ok(b) if same(b, summary.bound) => {}
        _ => fail("summary bound does not match its inputs".into()),
    }
    report.traces_checked = checked;
    Ok(report)
}
