use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trajectory::TrajectoryRecord;
use super::{linearized_rhs, vector_field_fast, vector_field_naive};
use crate::linearized::OperatorPair;
use crate::observables::{charge, ConservedTriple};
use crate::state::ModeVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("fast vector field disagrees with the oracle at t = {t}: relative error {error:e}")]
    OracleMismatch { t: f64, error: f64 },
    #[error("initial state has {got} modes, operators expect {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_end: f64,
    pub sample_dt: f64,
    /// Rescale onto the initial charge sphere after each accepted step.
    pub renormalize_q: bool,
    /// Integrate `d alpha/dt = +i F` instead.
    pub backward: bool,
    /// Oracle cross-check every this many accepted steps; `None` selects
    /// 1000 for `N <= 48` and disables it above.
    pub oracle_stride: Option<usize>,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            t_end: 10.0,
            sample_dt: 0.1,
            renormalize_q: false,
            backward: false,
            oracle_stride: None,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidConfig(m.to_string()));
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad("rel_tol must be positive");
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad("abs_tol must be positive");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive");
        }
        if !(self.sample_dt > 0.0 && self.sample_dt.is_finite()) {
            return bad("sample_dt must be positive");
        }
        if !(self.max_step > 0.0) {
            return bad("max_step must be positive");
        }
        Ok(())
    }

    fn stride_for(&self, n: usize) -> Option<usize> {
        match self.oracle_stride {
            Some(0) => None,
            Some(s) => Some(s),
            None if n <= 48 => Some(1000),
            None => None,
        }
    }

    /// Sample times `0, dt, 2 dt, ...` ending exactly at `t_end`.
    pub fn sample_times(&self) -> Vec<f64> {
        let count = (self.t_end / self.sample_dt * (1.0 + 1e-12)).floor() as usize;
        let mut times: Vec<f64> = (0..=count).map(|k| k as f64 * self.sample_dt).collect();
        if let Some(last) = times.last() {
            if (self.t_end - last) > 1e-12 * self.t_end {
                times.push(self.t_end);
            } else {
                *times.last_mut().unwrap() = self.t_end;
            }
        }
        times
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub oracle_checks: usize,
    pub max_oracle_error: f64,
    pub renormalizations: usize,
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth-order weights minus the embedded fourth-order ones.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive Dormand-Prince 5(4) stepper with first-same-as-last reuse, for
/// autonomous systems on `R^d`.
#[derive(Debug, Clone)]
pub struct Dopri54 {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Dopri54 {
    pub fn from_config(cfg: &IntegratorConfig) -> Self {
        Self {
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
            max_step: cfg.max_step,
            max_steps: cfg.max_steps,
        }
    }

    fn error_norm(&self, y: &[f64], ynew: &[f64], err: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..y.len() {
            let sc = self.abs_tol + self.rel_tol * y[i].abs().max(ynew[i].abs());
            let r = err[i] / sc;
            acc += r * r;
        }
        (acc / y.len().max(1) as f64).sqrt()
    }

    fn initial_step(
        &self,
        f0: &[f64],
        y0: &[f64],
        rhs: &mut impl FnMut(&[f64], &mut [f64]),
    ) -> f64 {
        let scale = |y: &[f64], i: usize| self.abs_tol + self.rel_tol * y[i].abs();
        let rms = |v: &[f64], y: &[f64]| {
            (v.iter()
                .enumerate()
                .map(|(i, x)| (x / scale(y, i)).powi(2))
                .sum::<f64>()
                / v.len().max(1) as f64)
                .sqrt()
        };
        let d0 = rms(y0, y0);
        let d1 = rms(f0, y0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; y0.len()];
        rhs(&y1, &mut f1);
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = rms(&diff, y0) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.max_step)
    }

    /// Integrates `y' = rhs(y)` from `t = 0` through the ascending `samples`,
    /// landing exactly on each. `on_sample` sees every sample (including
    /// `t = 0`); `on_accept` may modify the state after each accepted step.
    pub fn drive<R, A, S>(
        &self,
        y0: &[f64],
        samples: &[f64],
        mut rhs: R,
        mut on_accept: A,
        mut on_sample: S,
    ) -> Result<StepStats, FlowError>
    where
        R: FnMut(&[f64], &mut [f64]),
        A: FnMut(f64, &mut [f64], &mut StepStats) -> Result<(), FlowError>,
        S: FnMut(f64, &[f64]),
    {
        let dim = y0.len();
        let mut stats = StepStats::default();
        let mut y = y0.to_vec();
        let mut t = 0.0;
        let mut k = vec![vec![0.0; dim]; 7];
        let mut tmp = vec![0.0; dim];
        let mut ynew = vec![0.0; dim];
        let mut err = vec![0.0; dim];

        rhs(&y, &mut k[0]);
        stats.evaluations += 1;
        check_finite(&k[0], t)?;
        let mut h = self.initial_step(&k[0], &y, &mut rhs);
        stats.evaluations += 1;

        let mut next = 0;
        while next < samples.len() && samples[next] <= t {
            on_sample(samples[next], &y);
            next += 1;
        }
        let mut last_rejected = false;
        while next < samples.len() {
            let target = samples[next];
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(FlowError::TooManySteps {
                    t,
                    max_steps: self.max_steps,
                });
            }
            let mut hs = h.min(self.max_step);
            let remaining = target - t;
            let lands = hs >= remaining * (1.0 - 1e-12);
            if lands {
                hs = remaining;
            }

            let stage = |tmp: &mut [f64], coeffs: &[(f64, usize)], k: &[Vec<f64>], y: &[f64]| {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for &(a, j) in coeffs {
                        acc += a * k[j][i];
                    }
                    tmp[i] = y[i] + hs * acc;
                }
            };
            stage(&mut tmp, &[(A21, 0)], &k, &y);
            rhs(&tmp, &mut k[1]);
            stage(&mut tmp, &[(A31, 0), (A32, 1)], &k, &y);
            rhs(&tmp, &mut k[2]);
            stage(&mut tmp, &[(A41, 0), (A42, 1), (A43, 2)], &k, &y);
            rhs(&tmp, &mut k[3]);
            stage(&mut tmp, &[(A51, 0), (A52, 1), (A53, 2), (A54, 3)], &k, &y);
            rhs(&tmp, &mut k[4]);
            stage(
                &mut tmp,
                &[(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)],
                &k,
                &y,
            );
            rhs(&tmp, &mut k[5]);
            stage(
                &mut ynew,
                &[(B1, 0), (B3, 2), (B4, 3), (B5, 4), (B6, 5)],
                &k,
                &y,
            );
            rhs(&ynew, &mut k[6]);
            stats.evaluations += 6;

            for i in 0..dim {
                err[i] = hs
                    * (E1 * k[0][i]
                        + E3 * k[2][i]
                        + E4 * k[3][i]
                        + E5 * k[4][i]
                        + E6 * k[5][i]
                        + E7 * k[6][i]);
            }
            let en = self.error_norm(&y, &ynew, &err);
            if !en.is_finite() || ynew.iter().any(|x| !x.is_finite()) {
                return Err(FlowError::NonFinite { t });
            }

            if en <= 1.0 {
                t = if lands { target } else { t + hs };
                std::mem::swap(&mut y, &mut ynew);
                stats.accepted += 1;
                let before = stats.renormalizations;
                on_accept(t, &mut y, &mut stats)?;
                if stats.renormalizations != before {
                    rhs(&y, &mut k[0]);
                    stats.evaluations += 1;
                } else {
                    k.swap(0, 6);
                }
                let mut factor = if en == 0.0 { 5.0 } else { 0.9 * en.powf(-0.2) };
                factor = factor.clamp(0.2, 5.0);
                if last_rejected {
                    factor = factor.min(1.0);
                }
                // A step shortened to land on a sample says nothing about the
                // admissible size; keep the previous proposal in that case.
                if !(lands && hs < h) {
                    h = hs * factor;
                }
                last_rejected = false;
                while next < samples.len() && samples[next] <= t {
                    on_sample(samples[next], &y);
                    next += 1;
                }
            } else {
                stats.rejected += 1;
                last_rejected = true;
                let factor = (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
                h = hs * factor;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(FlowError::StepUnderflow { t, h });
                }
            }
        }
        Ok(stats)
    }
}

fn check_finite(v: &[f64], t: f64) -> Result<(), FlowError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(FlowError::NonFinite { t })
    }
}

pub(crate) fn pack(alpha: &[Complex64]) -> Vec<f64> {
    alpha.iter().flat_map(|z| [z.re, z.im]).collect()
}

pub(crate) fn unpack(y: &[f64]) -> Vec<Complex64> {
    y.chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect()
}

/// Solves `d alpha/dt = -i F(alpha)` (or `+i F` when `backward`), sampling at
/// the configured cadence and recording `H`, `Q`, `E` at each sample.
pub fn integrate(
    alpha0: &ModeVector,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryRecord, FlowError> {
    cfg.validate()?;
    if !alpha0.is_finite() {
        return Err(FlowError::NonFinite { t: 0.0 });
    }
    let started = Instant::now();
    let n = alpha0.len();
    let sign = if cfg.backward { 1.0 } else { -1.0 };
    let q0 = charge(alpha0);
    let stride = cfg.stride_for(n);
    if cfg.renormalize_q {
        log::info!("charge renormalization active (Q0 = {q0:.17e})");
    }

    let rhs = |y: &[f64], dy: &mut [f64]| {
        let alpha = unpack(y);
        let f = vector_field_fast(&alpha);
        for (i, z) in f.iter().enumerate() {
            // -i F = (F.im, -F.re); +i F = (-F.im, F.re).
            dy[2 * i] = -sign * z.im;
            dy[2 * i + 1] = sign * z.re;
        }
    };
    let on_accept = |t: f64, y: &mut [f64], stats: &mut StepStats| {
        if let Some(s) = stride {
            if stats.accepted % s == 0 {
                let alpha = unpack(y);
                let fast = vector_field_fast(&alpha);
                let naive = vector_field_naive(&alpha);
                let num: f64 = fast
                    .iter()
                    .zip(&naive)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum();
                let den: f64 = naive.iter().map(|b| b.norm_sqr()).sum();
                let rel = if den > 0.0 {
                    (num / den).sqrt()
                } else {
                    num.sqrt()
                };
                stats.oracle_checks += 1;
                stats.max_oracle_error = stats.max_oracle_error.max(rel);
                if rel > 1e-10 {
                    return Err(FlowError::OracleMismatch { t, error: rel });
                }
            }
        }
        if cfg.renormalize_q && q0 > 0.0 {
            let q = charge(&unpack(y));
            if q > 0.0 {
                let s = (q0 / q).sqrt();
                y.iter_mut().for_each(|x| *x *= s);
                stats.renormalizations += 1;
            }
        }
        Ok(())
    };

    let samples = cfg.sample_times();
    let mut times = Vec::with_capacity(samples.len());
    let mut states = Vec::with_capacity(samples.len());
    let mut conserved = Vec::with_capacity(samples.len());
    let on_sample = |t: f64, y: &[f64]| {
        let alpha = unpack(y);
        conserved.push(ConservedTriple::of(&alpha));
        times.push(t);
        states.push(ModeVector::new(alpha).expect("finite state"));
    };
    let stepper = Dopri54::from_config(cfg);
    let stats = stepper.drive(&pack(alpha0), &samples, rhs, on_accept, on_sample)?;
    if cfg.renormalize_q {
        log::info!("applied {} charge renormalizations", stats.renormalizations);
    }
    Ok(TrajectoryRecord {
        times,
        states,
        conserved,
        stats,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedTrajectory {
    pub times: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub stats: StepStats,
}

/// Integrates `M a' = L_- b`, `M b' = -L_+ a`.
pub fn integrate_linearized(
    a0: &[f64],
    b0: &[f64],
    ops: &OperatorPair,
    cfg: &IntegratorConfig,
) -> Result<LinearizedTrajectory, FlowError> {
    cfg.validate()?;
    let n = ops.truncation();
    if a0.len() != n || b0.len() != n {
        return Err(FlowError::DimensionMismatch {
            got: a0.len().max(b0.len()),
            expected: n,
        });
    }
    let mut y0 = a0.to_vec();
    y0.extend_from_slice(b0);
    let rhs = |y: &[f64], dy: &mut [f64]| {
        let (da, db) = linearized_rhs(&y[..n], &y[n..], ops);
        dy[..n].copy_from_slice(&da);
        dy[n..].copy_from_slice(&db);
    };
    let mut out = LinearizedTrajectory {
        times: Vec::new(),
        a: Vec::new(),
        b: Vec::new(),
        stats: StepStats::default(),
    };
    let stats = Dopri54::from_config(cfg).drive(
        &y0,
        &cfg.sample_times(),
        rhs,
        |_, _, _| Ok(()),
        |t, y| {
            out.times.push(t);
            out.a.push(y[..n].to_vec());
            out.b.push(y[n..].to_vec());
        },
    )?;
    out.stats = stats;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{ground_state, scaling_apply, weighted_norm, WeightedNormOrder};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn harmonic_oscillator_is_accurate() {
        let stepper = Dopri54 {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
        };
        let samples: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let mut out = Vec::new();
        stepper
            .drive(
                &[1.0, 0.0],
                &samples,
                |y, dy| {
                    dy[0] = y[1];
                    dy[1] = -y[0];
                },
                |_, _, _| Ok(()),
                |t, y| out.push((t, y[0])),
            )
            .unwrap();
        assert_eq!(out.len(), samples.len());
        for (t, x) in out {
            assert!((x - t.cos()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn sample_times_end_exactly() {
        let cfg = IntegratorConfig {
            t_end: 1.0,
            sample_dt: 0.3,
            ..Default::default()
        };
        assert_eq!(cfg.sample_times().last(), Some(&1.0));
        assert_eq!(cfg.sample_times().len(), 5);
        let cfg = IntegratorConfig {
            t_end: 1.0,
            sample_dt: 0.1,
            ..Default::default()
        };
        assert_eq!(cfg.sample_times().len(), 11);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = IntegratorConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&ModeVector::zeros(3), &cfg),
            Err(FlowError::InvalidConfig(_))
        ));
    }

    #[test]
    fn nan_is_detected() {
        let stepper = Dopri54::from_config(&IntegratorConfig::default());
        let res = stepper.drive(
            &[1.0],
            &[0.0, 1.0],
            |y, dy| dy[0] = if y[0] > 1.5 { f64::NAN } else { 1.0 },
            |_, _, _| Ok(()),
            |_, _| {},
        );
        assert!(matches!(res, Err(FlowError::NonFinite { .. })));
    }

    #[test]
    fn ground_state_rotates() {
        let a0 = ground_state(0.5, 64).unwrap();
        let cfg = IntegratorConfig {
            t_end: 10.0,
            sample_dt: 1.0,
            ..Default::default()
        };
        let tr = integrate(&a0, &cfg).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let rot = Complex64::from_polar(1.0, -t);
            for n in 0..20 {
                assert!((s[n].norm() - a0[n].norm()).abs() < 1e-9);
                assert!((s[n] - rot * a0[n]).norm() < 1e-8, "t={t} n={n}");
            }
        }
    }

    #[test]
    fn single_mode_and_zero() {
        let cm = c(0.8, 0.6) * 1.2;
        let a0 = ModeVector::delta(6, 0, cm).unwrap();
        let cfg = IntegratorConfig {
            t_end: 5.0,
            sample_dt: 0.5,
            ..Default::default()
        };
        let tr = integrate(&a0, &cfg).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let expect = cm * Complex64::from_polar(1.0, -cm.norm_sqr() * t);
            assert!((s[0] - expect).norm() < 1e-8);
        }
        let z = integrate(&ModeVector::zeros(4), &cfg).unwrap();
        assert!(z.states.iter().all(|s| s.iter().all(|x| *x == c(0.0, 0.0))));
    }

    #[test]
    fn time_reversal_returns() {
        let a0 = ModeVector::new(
            (0..16)
                .map(|n| Complex64::from_polar(0.5 / (1.0 + n as f64), 1.3 * n as f64))
                .collect(),
        )
        .unwrap();
        let fwd = IntegratorConfig {
            t_end: 10.0,
            sample_dt: 10.0,
            ..Default::default()
        };
        let tr = integrate(&a0, &fwd).unwrap();
        let back = IntegratorConfig {
            backward: true,
            ..fwd.clone()
        };
        let tr2 = integrate(tr.states.last().unwrap(), &back).unwrap();
        let end = tr2.states.last().unwrap();
        let d = weighted_norm(&end.difference(&a0), WeightedNormOrder::ONE);
        assert!(d < 1e-7, "{d}");
    }

    #[test]
    fn scaling_symmetry() {
        let a0 = ModeVector::new(
            (0..12)
                .map(|n| Complex64::from_polar(0.4 / (1.0 + n as f64), 0.9 * n as f64))
                .collect(),
        )
        .unwrap();
        let s = 1.5;
        let cfg = IntegratorConfig {
            t_end: 4.5,
            sample_dt: 2.25,
            ..Default::default()
        };
        let slow = integrate(&a0, &cfg).unwrap();
        let cfg_fast = IntegratorConfig {
            t_end: 2.0,
            sample_dt: 1.0,
            ..Default::default()
        };
        let fast = integrate(&scaling_apply(&a0, s).unwrap(), &cfg_fast).unwrap();
        for k in 0..3 {
            let scaled = scaling_apply(&slow.states[k], s).unwrap();
            let d = weighted_norm(&scaled.difference(&fast.states[k]), WeightedNormOrder::ONE);
            assert!(d < 1e-8, "k={k} d={d}");
        }
    }
}
