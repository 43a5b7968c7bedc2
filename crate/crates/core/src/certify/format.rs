//! Text layout of a single certificate trace.
//!
//! ```text
//! certrl-trace 1
//! index <i>
//! seed <u64>
//! epsilon <f>
//! eps_e <f>
//! horizon <T>
//! state_dim <k>
//! action_dim <m>
//! model_kind <kind>
//! policy_fingerprint <hex>
//! model_fingerprint <hex>
//! initial_state <k floats>
//! step <t>                      (T blocks)
//! state_center / state_deviation <k floats>
//! observed_center / observed_deviation <k floats>
//! action_center / action_deviation <m floats>
//! reward_center / reward_deviation <1 float>
//! noise_action <m floats>
//! noise_state <k floats>
//! total_center / total_deviation <1 float>
//! sha256 <hex of every preceding byte>
//! ```
//!
//! Floats use 17 significant digits so parsing restores them bit-exactly.

use std::path::Path;

use crate::domain::IntervalBox;
use crate::error::{Error, Result};
use crate::textio::{fmt_f64, fmt_vec, parse_f64, parse_vec, sha256_hex, Lines};

use super::rollout::{AbstractTrace, StepNoise, TraceMeta, TraceStep};

fn push_box(out: &mut String, name: &str, b: &IntervalBox) {
    out.push_str(&format!("{name}_center {}\n", fmt_vec(b.center())));
    out.push_str(&format!("{name}_deviation {}\n", fmt_vec(b.deviation())));
}

/// Appends `sha256 <hex>` covering `body`.
pub fn seal(mut body: String) -> String {
    let hash = sha256_hex(body.as_bytes());
    body.push_str(&format!("sha256 {hash}\n"));
    body
}

/// Checks the trailing hash line and returns the covered body.
pub fn unseal(text: &str) -> std::result::Result<&str, String> {
    let trimmed = text.strip_suffix('\n').ok_or("missing trailing newline")?;
    let cut = trimmed.rfind('\n').map_or(0, |i| i + 1);
    let (body, last) = text.split_at(cut);
    let hash = last
        .strip_prefix("sha256 ")
        .map(str::trim_end)
        .ok_or("missing sha256 line")?;
    if sha256_hex(body.as_bytes()) != hash {
        return Err("content hash mismatch".into());
    }
    Ok(body)
}

pub fn trace_to_text(trace: &AbstractTrace) -> String {
    let m = &trace.meta;
    let mut out = String::from("certrl-trace 1\n");
    out.push_str(&format!("index {}\nseed {}\n", m.index, m.seed));
    out.push_str(&format!("epsilon {}\neps_e {}\n", fmt_f64(m.epsilon), fmt_f64(m.eps_e)));
    out.push_str(&format!(
        "horizon {}\nstate_dim {}\naction_dim {}\n",
        m.horizon, m.state_dim, m.action_dim
    ));
    out.push_str(&format!("model_kind {}\n", m.model_kind));
    out.push_str(&format!("policy_fingerprint {}\n", m.policy_fingerprint));
    out.push_str(&format!("model_fingerprint {}\n", m.model_fingerprint));
    out.push_str(&format!("initial_state {}\n", fmt_vec(&m.initial_state)));
    for (t, (step, noise)) in trace.steps.iter().zip(&trace.noise).enumerate() {
        out.push_str(&format!("step {t}\n"));
        push_box(&mut out, "state", &step.state);
        push_box(&mut out, "observed", &step.observed);
        push_box(&mut out, "action", &step.action);
        push_box(&mut out, "reward", &step.reward);
        out.push_str(&format!("noise_action {}\n", fmt_vec(&noise.action)));
        out.push_str(&format!("noise_state {}\n", fmt_vec(&noise.state)));
    }
    push_box(&mut out, "total", &trace.total_reward);
    seal(out)
}

struct Reader<'a> {
    lines: Lines<'a>,
}

type Parsed<T> = std::result::Result<T, String>;

impl<'a> Reader<'a> {
    fn tokens(&mut self, key: &str) -> Parsed<(usize, Vec<&'a str>)> {
        self.lines.expect(key)
    }

    fn one(&mut self, key: &str) -> Parsed<&'a str> {
        match self.tokens(key)? {
            (_, t) if t.len() == 1 => Ok(t[0]),
            (no, _) => Err(format!("line {no}: expected one value for {key}")),
        }
    }

    fn usize(&mut self, key: &str) -> Parsed<usize> {
        self.one(key)?.parse().map_err(|e| format!("bad {key}: {e}"))
    }

    fn float(&mut self, key: &str) -> Parsed<f64> {
        parse_f64(self.one(key)?)
    }

    fn vec(&mut self, key: &str, len: usize) -> Parsed<Vec<f64>> {
        let (no, t) = self.tokens(key)?;
        let v = parse_vec(t.into_iter())?;
        if v.len() != len {
            return Err(format!("line {no}: {key} has {} values, expected {len}", v.len()));
        }
        Ok(v)
    }

    fn boxed(&mut self, name: &str, len: usize) -> Parsed<IntervalBox> {
        let c = self.vec(&format!("{name}_center"), len)?;
        let d = self.vec(&format!("{name}_deviation"), len)?;
        IntervalBox::new(c, d).map_err(|e| format!("{name}: {e}"))
    }
}

pub fn trace_from_text(text: &str, path: &Path) -> Result<AbstractTrace> {
    let parsed = (|| -> Parsed<AbstractTrace> {
        let body = unseal(text)?;
        let mut r = Reader { lines: Lines::new(body) };
        if r.one("certrl-trace")? != "1" {
            return Err("unsupported trace version".into());
        }
        let index = r.usize("index")?;
        let seed: u64 = r.one("seed")?.parse().map_err(|e| format!("bad seed: {e}"))?;
        let epsilon = r.float("epsilon")?;
        let eps_e = r.float("eps_e")?;
        let horizon = r.usize("horizon")?;
        let k = r.usize("state_dim")?;
        let m = r.usize("action_dim")?;
        let model_kind = r.one("model_kind")?.to_string();
        let policy_fingerprint = r.one("policy_fingerprint")?.to_string();
        let model_fingerprint = r.one("model_fingerprint")?.to_string();
        let initial_state = r.vec("initial_state", k)?;
        let mut steps = Vec::with_capacity(horizon);
        let mut noise = Vec::with_capacity(horizon);
        for t in 0..horizon {
            if r.usize("step")? != t {
                return Err(format!("steps out of order at {t}"));
            }
            steps.push(TraceStep {
                state: r.boxed("state", k)?,
                observed: r.boxed("observed", k)?,
                action: r.boxed("action", m)?,
                reward: r.boxed("reward", 1)?,
            });
            noise.push(StepNoise {
                action: r.vec("noise_action", m)?,
                state: r.vec("noise_state", k)?,
            });
        }
        let total_reward = r.boxed("total", 1)?;
        if let Some((no, key, _)) = r.lines.next_record() {
            return Err(format!("line {no}: unexpected {key}"));
        }
        Ok(AbstractTrace {
            meta: TraceMeta {
                index,
                seed,
                epsilon,
                eps_e,
                horizon,
                state_dim: k,
                action_dim: m,
                model_kind,
                policy_fingerprint,
                model_fingerprint,
                initial_state,
            },
            steps,
            noise,
            total_reward,
        })
    })();
    parsed.map_err(|r| Error::parse("certificate trace", path, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Mdp, PerturbationSpec};
    use crate::model::{ExactModel, GaussianPolicy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_trace() -> AbstractTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = GaussianPolicy::random(2, 2, &[4], -1.0, &mut rng).unwrap();
        let model = ExactModel::new(Mdp::pointmass(2).unwrap());
        let spec = PerturbationSpec::new(0.1).unwrap();
        super::super::rollout::abstract_rollout(&policy, &model, &[0.1, 0.2], &spec, 4, 5, 3, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let trace = sample_trace();
        let text = trace_to_text(&trace);
        let back = trace_from_text(&text, Path::new("mem")).unwrap();
        assert_eq!(back, trace);
        assert_eq!(trace_to_text(&back), text);
    }

    #[test]
    fn any_edit_breaks_hash() {
        let text = trace_to_text(&sample_trace());
        let edited = text.replacen("reward_center ", "reward_center 0", 1);
        assert!(trace_from_text(&edited, Path::new("mem")).is_err());
        assert!(trace_from_text(&text[..text.len() - 3], Path::new("mem")).is_err());
    }

    #[test]
    fn seal_unseal() {
        let s = seal("a 1\nb 2\n".into());
        assert_eq!(unseal(&s).unwrap(), "a 1\nb 2\n");
        assert!(unseal("a 1\n").is_err());
    }
}
