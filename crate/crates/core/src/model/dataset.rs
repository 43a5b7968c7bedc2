//! Transition datasets and their text format.
//!
//! File layout: a header line `certrl-transitions 1 <state_dim> <action_dim>`
//! followed by one transition per line with columns
//! `s_1..s_k a_1..a_m s'_1..s'_k r`, whitespace-separated, 17 significant digits.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::all_finite;
use crate::textio::{self, fmt_f64, fmt_vec, parse_vec};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
}

/// Append-only transition store with a capacity cap; the oldest records are
/// evicted once the cap is reached.
#[derive(Clone, Debug)]
pub struct TransitionDataset {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    records: VecDeque<Transition>,
}

impl TransitionDataset {
    pub fn new(state_dim: usize, action_dim: usize, capacity: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            capacity: capacity.max(1),
            records: VecDeque::new(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.records.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.records.iter()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        check_dim(self.state_dim, t.state.len())?;
        check_dim(self.action_dim, t.action.len())?;
        check_dim(self.state_dim, t.next_state.len())?;
        if !all_finite(&t.state) || !all_finite(&t.action) || !all_finite(&t.next_state) || !t.reward.is_finite() {
            return Err(Error::NonFinite("transition"));
        }
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(t);
        Ok(())
    }

    /// Uniformly sampled record.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&Transition> {
        if self.records.is_empty() {
            None
        } else {
            self.records.get(rng.random_range(0..self.records.len()))
        }
    }

    /// Deterministic split: every `every`-th record goes to the held-out set.
    pub fn split_holdout(&self, every: usize) -> (TransitionDataset, TransitionDataset) {
        let every = every.max(2);
        let mut train = Self::new(self.state_dim, self.action_dim, self.capacity);
        let mut held = Self::new(self.state_dim, self.action_dim, self.capacity);
        for (i, t) in self.records.iter().enumerate() {
            let dest = if i % every == every - 1 { &mut held } else { &mut train };
            dest.records.push_back(t.clone());
        }
        (train, held)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("certrl-transitions 1 {} {}\n", self.state_dim, self.action_dim);
        for t in &self.records {
            out.push_str(&format!(
                "{} {} {} {}\n",
                fmt_vec(&t.state),
                fmt_vec(&t.action),
                fmt_vec(&t.next_state),
                fmt_f64(t.reward)
            ));
        }
        out
    }

    pub fn from_text(text: &str, path: &Path, capacity: usize) -> Result<Self> {
        let err = |reason: String| Error::parse("transition dataset", path, reason);
        let mut lines = text.lines().enumerate().filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        });
        let (_, header) = lines.next().ok_or_else(|| err("missing header".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 4 || head[0] != "certrl-transitions" || head[1] != "1" {
            return Err(err(format!("bad header {header:?}")));
        }
        let k: usize = head[2].parse().map_err(|e| err(format!("bad state dim: {e}")))?;
        let m: usize = head[3].parse().map_err(|e| err(format!("bad action dim: {e}")))?;
        let mut ds = Self::new(k, m, capacity);
        for (no, line) in lines {
            let vals = parse_vec(line.split_whitespace()).map_err(|e| err(format!("line {}: {e}", no + 1)))?;
            if vals.len() != 2 * k + m + 1 {
                return Err(err(format!(
                    "line {}: expected {} columns, got {}",
                    no + 1,
                    2 * k + m + 1,
                    vals.len()
                )));
            }
            ds.push(Transition {
                state: vals[..k].to_vec(),
                action: vals[k..k + m].to_vec(),
                next_state: vals[k + m..2 * k + m].to_vec(),
                reward: vals[2 * k + m],
            })
            .map_err(|e| err(format!("line {}: {e}", no + 1)))?;
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        textio::write_string(path, &self.to_text())
    }

    pub fn load(path: &Path, capacity: usize) -> Result<Self> {
        Self::from_text(&textio::read_to_string(path)?, path, capacity)
    }
}
