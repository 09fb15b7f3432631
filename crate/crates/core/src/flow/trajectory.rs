use std::fmt::Write as _;

use super::integrator::StepStats;
use crate::observables::ConservedTriple;
use crate::state::{fmt_f64, ModeVector};

/// Sampled solution of the flow. Immutable once produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<ModeVector>,
    pub conserved: Vec<ConservedTriple>,
    pub stats: StepStats,
    /// Seconds spent integrating.
    pub wall_time: f64,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> &ModeVector {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }

    /// Largest relative drift of each of `(H, Q, E)` against the first sample.
    pub fn max_drift(&self) -> (f64, f64, f64) {
        let c0 = self.conserved[0];
        let rel = |x: f64, x0: f64| {
            if x0 == 0.0 {
                (x - x0).abs()
            } else {
                ((x - x0) / x0).abs()
            }
        };
        self.conserved.iter().fold((0.0, 0.0, 0.0), |acc, c| {
            (
                acc.0.max(rel(c.h, c0.h)),
                acc.1.max(rel(c.q, c0.q)),
                acc.2.max(rel(c.e, c0.e)),
            )
        })
    }

    /// CSV with columns `t,H,Q,E` followed by `re_n,im_n` for each requested
    /// mode that exists in the truncation.
    pub fn to_csv(&self, modes: &[usize]) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let modes: Vec<usize> = modes.iter().copied().filter(|&m| m < n).collect();
        let mut out = String::from("t,H,Q,E");
        for m in &modes {
            let _ = write!(out, ",re_{m},im_{m}");
        }
        out.push('\n');
        for ((t, c), s) in self.times.iter().zip(&self.conserved).zip(&self.states) {
            let _ = write!(
                out,
                "{},{},{},{}",
                fmt_f64(*t),
                fmt_f64(c.h),
                fmt_f64(c.q),
                fmt_f64(c.e)
            );
            for &m in &modes {
                let _ = write!(out, ",{},{}", fmt_f64(s[m].re), fmt_f64(s[m].im));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use crate::flow::{integrate, IntegratorConfig};
    use crate::state::ground_state;

    #[test]
    fn csv_layout() {
        let a0 = ground_state(0.3, 24).unwrap();
        let cfg = IntegratorConfig {
            t_end: 1.0,
            sample_dt: 0.5,
            ..Default::default()
        };
        let tr = integrate(&a0, &cfg).unwrap();
        let csv = tr.to_csv(&[0, 2, 99]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,H,Q,E,re_0,im_0,re_2,im_2");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').count(), 8);
        let (dh, dq, de) = tr.max_drift();
        assert!(dh < 1e-9 && dq < 1e-9 && de < 1e-9);
    }
}
