use serde::{Deserialize, Serialize};

/// Starting radius of the warm-up.
pub const EPS_START: f64 = 1e-12;

/// Perturbation-radius curriculum: exponential growth up to a quarter of
/// `end_step`, then a linear ramp to `target`, then a plateau.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub target: f64,
    pub end_step: usize,
    pub temperature: f64,
}

impl EpsilonSchedule {
    pub fn mid_step(&self) -> f64 {
        0.25 * self.end_step as f64
    }

    /// Radius at the junction, chosen so both value and slope match there.
    pub fn mid_value(&self) -> f64 {
        let start = EPS_START.min(self.target);
        let mid = self.mid_step();
        let end = self.end_step as f64;
        let tau = self.temperature;
        let a = tau * tau.exp() / (tau.exp_m1() * mid);
        let b = 1.0 / (end - mid);
        (a * start + b * self.target) / (a + b)
    }

    pub fn at(&self, step: usize) -> f64 {
        if self.target == 0.0 {
            return 0.0;
        }
        if step >= self.end_step || self.end_step == 0 {
            return self.target;
        }
        let start = EPS_START.min(self.target);
        let s = step as f64;
        let mid = self.mid_step();
        let eps_mid = self.mid_value();
        if s <= mid {
            let tau = self.temperature;
            start + (eps_mid - start) * (tau * s / mid).exp_m1() / tau.exp_m1()
        } else {
            let end = self.end_step as f64;
            eps_mid + (self.target - eps_mid) * (s - mid) / (end - mid)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(target: f64, end: usize) -> EpsilonSchedule {
        EpsilonSchedule {
            target,
            end_step: end,
            temperature: 4.0,
        }
    }

    #[test]
    fn endpoints() {
        let s = sched(0.1, 1000);
        assert_eq!(s.at(0), 1e-12);
        assert_eq!(s.at(1000), 0.1);
        assert_eq!(s.at(5000), 0.1);
        assert_eq!(sched(0.0, 100).at(3), 0.0);
        assert_eq!(sched(0.2, 0).at(0), 0.2);
    }

    #[test]
    fn continuous_and_smooth_at_junction() {
        let s = sched(0.1, 4000);
        let mid = 1000;
        let exp_side = s.at(mid);
        assert!((exp_side - s.mid_value()).abs() < 1e-15);
        let left = s.at(mid) - s.at(mid - 1);
        let right = s.at(mid + 1) - s.at(mid);
        assert!((left - right).abs() / right < 1e-2, "{left} vs {right}");
    }

    #[test]
    fn monotone_and_in_range() {
        let s = sched(0.05, 333);
        let mut prev = 0.0;
        for step in 0..400 {
            let e = s.at(step);
            assert!(e > 0.0 && e <= 0.05);
            assert!(e >= prev);
            prev = e;
        }
    }
}
