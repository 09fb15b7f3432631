//! Orthogonal decomposition of states near the ground-state orbit and
//! gauge-minimized distances to the orbit.
//!
//! Frames use the convention `alpha_n = e^{i(theta + mu + mu n)} (c A_n(p) + a_n + i b_n)`;
//! orbit distances use `e^{i theta + i mu n} A(p)`. The two are related by
//! `theta_orbit = theta + mu`.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::Serialize;

use crate::flow::TrajectoryRecord;
use crate::observables::higher_charge;
use crate::state::{
    fmt_f64, ground_amplitudes, ground_derivative, ground_second_derivative, ModeVector,
    WeightedNormOrder,
};

/// Below this `p` the `mu` direction degenerates and the two-parameter
/// decomposition about `A(0)` is used.
pub const P_SWITCH: f64 = 0.02;
pub const DEFAULT_DELTA0: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum ModulationError {
    #[error("empty state")]
    Empty,
    #[error("ground parameter p = {0} outside [0, 1)")]
    InvalidP(f64),
    #[error("Newton iteration failed after {iterations} steps, constraint residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Jacobian degenerate at p = {p:e}; use the two-parameter decomposition")]
    DegenerateJacobian { p: f64 },
    #[error("state is {distance:e} from the orbit, beyond delta0 = {delta0}")]
    OutsideNeighborhood { distance: f64, delta0: f64 },
    #[error("sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<ModulationError>,
    },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModulationOptions {
    /// Largest admissible `l^2` distance to the seed orbit.
    pub delta0: f64,
    pub max_iter: usize,
    /// Newton stops once every constraint is below this.
    pub tol: f64,
    /// Best residual accepted when the iteration stagnates at round-off.
    pub accept_tol: f64,
}

impl Default for ModulationOptions {
    fn default() -> Self {
        Self {
            delta0: DEFAULT_DELTA0,
            max_iter: 50,
            tol: 1e-14,
            accept_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulationFrame {
    pub c: f64,
    pub p: f64,
    pub theta: f64,
    pub mu: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Two-parameter frame about `A(0)`; `mu` is indeterminate and set to 0.
    pub reduced: bool,
    pub constraint_residual: f64,
    pub iterations: usize,
}

impl ModulationFrame {
    pub fn theta_orbit(&self) -> f64 {
        wrap(self.theta + self.mu)
    }

    pub fn truncation(&self) -> usize {
        self.a.len()
    }

    pub fn reconstruct(&self) -> ModeVector {
        let amp = ground_amplitudes(self.p, self.truncation());
        let v = (0..self.truncation())
            .map(|n| {
                let phase = Complex64::from_polar(1.0, self.theta + self.mu * (n + 1) as f64);
                phase * Complex64::new(self.c * amp[n] + self.a[n], self.b[n])
            })
            .collect();
        ModeVector::new(v).unwrap_or_else(|_| ModeVector::zeros(self.truncation()))
    }

    /// `h^1` norm of `alpha - reconstruct()`.
    pub fn reconstruction_residual(&self, alpha: &[Complex64]) -> f64 {
        let r = self.reconstruct();
        let d: Vec<Complex64> = alpha.iter().zip(r.iter()).map(|(x, y)| x - y).collect();
        crate::state::weighted_norm(&d, WeightedNormOrder::ONE)
    }

    /// `c^2 + <Ma, a> + <Mb, b>`, equal to `Q(alpha)` under the constraints.
    pub fn charge_budget(&self) -> f64 {
        self.c * self.c + weighted_sq(&self.a, &self.b, 1)
    }

    /// `c^2 (1+p^2)/(1-p^2) + <Ma, Ma> + <Mb, Mb>`, equal to `E(alpha)`
    /// under the constraints.
    pub fn energy_budget(&self) -> f64 {
        let p2 = self.p * self.p;
        self.c * self.c * (1.0 + p2) / (1.0 - p2) + weighted_sq(&self.a, &self.b, 2)
    }

    /// `||a + i b||` in `h^s`.
    pub fn remainder_norm(&self, s: WeightedNormOrder) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(n, (x, y))| s.weight(n) * (x * x + y * y))
            .sum::<f64>()
            .sqrt()
    }
}

fn weighted_sq(a: &[f64], b: &[f64], power: i32) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(n, (x, y))| ((n + 1) as f64).powi(power) * (x * x + y * y))
        .sum()
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

fn mdot(x: &[f64], y: &[f64], power: i32) -> f64 {
    x.iter()
        .zip(y)
        .enumerate()
        .map(|(n, (a, b))| ((n + 1) as f64).powi(power) * a * b)
        .sum()
}

fn check_p(p: f64) -> Result<(), ModulationError> {
    if p.is_finite() && (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(ModulationError::InvalidP(p))
    }
}

/// Two-parameter decomposition `alpha_n = e^{i theta}(c A_n(0) + a_n + i b_n)`
/// with `a_0 = b_0 = 0`.
pub fn decompose_p0(alpha: &[Complex64]) -> Result<ModulationFrame, ModulationError> {
    decompose_p0_with(alpha, &ModulationOptions::default())
}

pub fn decompose_p0_with(
    alpha: &[Complex64],
    opts: &ModulationOptions,
) -> Result<ModulationFrame, ModulationError> {
    if alpha.is_empty() {
        return Err(ModulationError::Empty);
    }
    let c = alpha[0].norm();
    let tail: f64 = alpha[1..].iter().map(|z| z.norm_sqr()).sum();
    let distance = ((c - 1.0).powi(2) + tail).sqrt();
    if !(distance <= opts.delta0 * (1.0 + 1e-12)) {
        return Err(ModulationError::OutsideNeighborhood {
            distance,
            delta0: opts.delta0,
        });
    }
    let theta = alpha[0].arg();
    let rot = Complex64::from_polar(1.0, -theta);
    let mut a = Vec::with_capacity(alpha.len());
    let mut b = Vec::with_capacity(alpha.len());
    a.push(0.0);
    b.push(0.0);
    for z in &alpha[1..] {
        let w = rot * z;
        a.push(w.re);
        b.push(w.im);
    }
    Ok(ModulationFrame {
        c,
        p: 0.0,
        theta,
        mu: 0.0,
        a,
        b,
        reduced: true,
        constraint_residual: 0.0,
        iterations: 0,
    })
}

/// Starting point for the Newton iteration, in the frame convention.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FrameSeed {
    pub c: f64,
    pub p: f64,
    pub theta: f64,
    pub mu: f64,
}

impl From<&ModulationFrame> for FrameSeed {
    fn from(f: &ModulationFrame) -> Self {
        Self {
            c: f.c,
            p: f.p,
            theta: f.theta,
            mu: f.mu,
        }
    }
}

/// Four-parameter decomposition seeded from an orbit-distance scan at
/// `p_init`. Falls back to [`decompose_p0`] when `p_init < P_SWITCH`.
pub fn decompose(alpha: &[Complex64], p_init: f64) -> Result<ModulationFrame, ModulationError> {
    decompose_with(alpha, p_init, &ModulationOptions::default())
}

pub fn decompose_with(
    alpha: &[Complex64],
    p_init: f64,
    opts: &ModulationOptions,
) -> Result<ModulationFrame, ModulationError> {
    check_p(p_init)?;
    if alpha.is_empty() {
        return Err(ModulationError::Empty);
    }
    if p_init < P_SWITCH {
        return decompose_p0_with(alpha, opts);
    }
    let scan = orbit_distance(alpha, p_init, WeightedNormOrder::L2)?;
    if !(scan.distance <= opts.delta0 * (1.0 + 1e-12)) {
        return Err(ModulationError::OutsideNeighborhood {
            distance: scan.distance,
            delta0: opts.delta0,
        });
    }
    let seed = FrameSeed {
        c: 1.0,
        p: p_init,
        theta: wrap(scan.theta - scan.mu),
        mu: scan.mu,
    };
    decompose_seeded(alpha, seed, opts)
}

struct Eval {
    f: Vector4<f64>,
    j: Matrix4<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    amp: Vec<f64>,
}

fn evaluate(alpha: &[Complex64], s: &FrameSeed) -> Eval {
    let n = alpha.len();
    let amp = ground_amplitudes(s.p, n);
    let d1 = ground_derivative(s.p, n);
    let d2 = ground_second_derivative(s.p, n);
    let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (k, z) in alpha.iter().enumerate() {
        let w = Complex64::from_polar(1.0, -(s.theta + s.mu * (k + 1) as f64)) * z;
        u.push(w.re);
        v.push(w.im);
    }
    let c = s.c;
    let a_u = mdot(&amp, &u, 1);
    let d1_u = mdot(&d1, &u, 1);
    let d2_u = mdot(&d2, &u, 1);
    let a_v = mdot(&amp, &v, 1);
    let d1_v = mdot(&d1, &v, 1);
    let d2_v = mdot(&d2, &v, 1);
    let a_a = mdot(&amp, &amp, 1);
    let d1_a = mdot(&d1, &amp, 1);
    let d2_a = mdot(&d2, &amp, 1);
    let d1_d1 = mdot(&d1, &d1, 1);

    let f = Vector4::new(a_u - c * a_a, d1_u - c * d1_a, a_v, d1_v);
    #[rustfmt::skip]
    let j = Matrix4::new(
        -a_a, d1_u - 2.0 * c * d1_a, a_v, mdot(&amp, &v, 2),
        -d1_a, d2_u - c * d2_a - c * d1_d1, d1_v, mdot(&d1, &v, 2),
        0.0, d1_v, -a_u, -mdot(&amp, &u, 2),
        0.0, d2_v, -d1_u, -mdot(&d1, &u, 2),
    );
    Eval { f, j, u, v, amp }
}

/// Newton iteration on the four orthogonality constraints from `seed`,
/// with the full Jacobian evaluated at each iterate.
pub fn decompose_seeded(
    alpha: &[Complex64],
    seed: FrameSeed,
    opts: &ModulationOptions,
) -> Result<ModulationFrame, ModulationError> {
    if alpha.is_empty() {
        return Err(ModulationError::Empty);
    }
    check_p(seed.p)?;
    let mut x = seed;
    let mut ev = evaluate(alpha, &x);
    let mut res = ev.f.amax();
    let mut history = vec![res];
    let mut iterations = 0;
    while res > opts.tol && iterations < opts.max_iter {
        if x.p < P_SWITCH {
            return Err(ModulationError::DegenerateJacobian { p: x.p });
        }
        let step =
            ev.j.lu()
                .solve(&(-ev.f))
                .filter(|s| s.iter().all(|v| v.is_finite()))
                .ok_or(ModulationError::DegenerateJacobian { p: x.p })?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial = FrameSeed {
                c: x.c + scale * step[0],
                p: x.p + scale * step[1],
                theta: wrap(x.theta + scale * step[2]),
                mu: wrap(x.mu + scale * step[3]),
            };
            if trial.p > 0.0 && trial.p < 1.0 {
                let te = evaluate(alpha, &trial);
                let tr = te.f.amax();
                if tr < res {
                    accepted = Some((trial, te, tr));
                    break;
                }
            }
            scale *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((t, e, r)) => {
                x = t;
                ev = e;
                res = r;
                history.push(r);
            }
            None => break,
        }
    }
    log::debug!("modulation Newton residuals {history:?}");
    if res > opts.accept_tol {
        if x.p < P_SWITCH {
            return Err(ModulationError::DegenerateJacobian { p: x.p });
        }
        return Err(ModulationError::NoConvergence {
            iterations,
            residual: res,
        });
    }
    let a: Vec<f64> = ev.u.iter().zip(&ev.amp).map(|(u, a)| u - x.c * a).collect();
    Ok(ModulationFrame {
        c: x.c,
        p: x.p,
        theta: x.theta,
        mu: x.mu,
        a,
        b: ev.v,
        reduced: false,
        constraint_residual: res,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrbitDistance {
    pub distance: f64,
    /// Minimizer in the orbit convention `e^{i theta + i mu n}`.
    pub theta: f64,
    pub mu: f64,
    pub order: f64,
}

/// `inf ||alpha - e^{i theta + i mu n} A(p)||_{h^s}` over the torus.
///
/// The infimum maximizes `|h(mu)|`, `h(mu) = sum (n+1)^{2s} conj(alpha_n) A_n e^{i mu n}`,
/// located on a grid of at least `8N` points and refined by safeguarded
/// Newton on `d|h|^2/dmu`.
pub fn orbit_distance(
    alpha: &[Complex64],
    p: f64,
    s: WeightedNormOrder,
) -> Result<OrbitDistance, ModulationError> {
    check_p(p)?;
    let n = alpha.len();
    let amp = ground_amplitudes(p, n);
    let g: Vec<Complex64> = (0..n)
        .map(|k| s.weight(k) * amp[k] * alpha[k].conj())
        .collect();
    let eval = |mu: f64| -> (Complex64, Complex64, Complex64) {
        let step = Complex64::from_polar(1.0, mu);
        let mut e = Complex64::new(1.0, 0.0);
        let (mut h, mut h1, mut h2) = (
            Complex64::default(),
            Complex64::default(),
            Complex64::default(),
        );
        for (k, gk) in g.iter().enumerate() {
            let t = gk * e;
            let kf = k as f64;
            h += t;
            h1 += t * Complex64::new(0.0, kf);
            h2 -= t * kf * kf;
            e *= step;
        }
        (h, h1, h2)
    };

    let mu_star = if p == 0.0 || n < 2 {
        0.0
    } else {
        let m = (8 * n).max(64);
        let dmu = 2.0 * PI / m as f64;
        let grid: Vec<f64> = (0..m).map(|k| eval(k as f64 * dmu).0.norm_sqr()).collect();
        let mut peaks: Vec<usize> = (0..m)
            .filter(|&k| grid[k] >= grid[(k + m - 1) % m] && grid[k] >= grid[(k + 1) % m])
            .collect();
        peaks.sort_by(|a, b| grid[*b].total_cmp(&grid[*a]));
        peaks.truncate(3);
        let mut best = (0.0, f64::NEG_INFINITY);
        for k in peaks {
            let mu = refine(k as f64 * dmu, dmu, &eval);
            let val = eval(mu).0.norm_sqr();
            if val > best.1 {
                best = (mu, val);
            }
        }
        wrap(best.0)
    };
    let h = eval(mu_star).0;
    let theta = if h.norm() == 0.0 { 0.0 } else { wrap(-h.arg()) };
    let dist2: f64 = (0..n)
        .map(|k| {
            let orbit = Complex64::from_polar(amp[k], theta + mu_star * k as f64);
            s.weight(k) * (alpha[k] - orbit).norm_sqr()
        })
        .sum();
    Ok(OrbitDistance {
        distance: dist2.sqrt(),
        theta,
        mu: mu_star,
        order: s.value(),
    })
}

/// Maximizes `|h|^2` near `mu0` within `[mu0 - width, mu0 + width]`.
fn refine(mu0: f64, width: f64, eval: &impl Fn(f64) -> (Complex64, Complex64, Complex64)) -> f64 {
    let grad = |mu: f64| {
        let (h, h1, h2) = eval(mu);
        let g1 = 2.0 * (h.conj() * h1).re;
        let g2 = 2.0 * (h1.norm_sqr() + (h.conj() * h2).re);
        (g1, g2)
    };
    let (mut lo, mut hi) = (mu0 - width, mu0 + width);
    let bracketed = grad(lo).0 > 0.0 && grad(hi).0 < 0.0;
    let mut mu = mu0;
    for _ in 0..100 {
        let (g1, g2) = grad(mu);
        if g1 == 0.0 {
            break;
        }
        if bracketed {
            if g1 > 0.0 {
                lo = mu;
            } else {
                hi = mu;
            }
        }
        let newton = if g2 < 0.0 { mu - g1 / g2 } else { f64::NAN };
        let next = if newton > lo && newton < hi {
            newton
        } else if bracketed {
            0.5 * (lo + hi)
        } else {
            break;
        };
        let done = (next - mu).abs() <= 1e-15 * (1.0 + mu.abs());
        mu = next;
        if done || (bracketed && hi - lo <= 1e-15) {
            break;
        }
    }
    mu
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackRow {
    pub t: f64,
    pub c: f64,
    pub p: f64,
    pub theta: f64,
    pub mu: f64,
    pub dist_h12: f64,
    pub dist_h1: f64,
    /// `|energy_budget - E(alpha(0))|`.
    pub residual: f64,
    pub constraint_residual: f64,
    pub reconstruction_residual: f64,
    pub reduced: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulationTrack {
    pub p_init: f64,
    pub energy0: f64,
    pub rows: Vec<TrackRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackSummary {
    pub samples: usize,
    pub p_init: f64,
    pub sup_dist_h12: f64,
    pub sup_dist_h1: f64,
    pub sup_c_deviation: f64,
    pub min_p: f64,
    pub max_p: f64,
    /// `max_t (p_init - p(t))`.
    pub max_p_drop: f64,
    pub max_energy_residual: f64,
    pub max_constraint_residual: f64,
    pub max_reconstruction_residual: f64,
    pub reduced_samples: usize,
}

impl ModulationTrack {
    pub fn summary(&self) -> TrackSummary {
        let fold = |f: &dyn Fn(&TrackRow) -> f64| {
            self.rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
        };
        TrackSummary {
            samples: self.rows.len(),
            p_init: self.p_init,
            sup_dist_h12: fold(&|r| r.dist_h12),
            sup_dist_h1: fold(&|r| r.dist_h1),
            sup_c_deviation: fold(&|r| (r.c - 1.0).abs()),
            min_p: -fold(&|r| -r.p),
            max_p: fold(&|r| r.p),
            max_p_drop: fold(&|r| self.p_init - r.p),
            max_energy_residual: fold(&|r| r.residual),
            max_constraint_residual: fold(&|r| r.constraint_residual),
            max_reconstruction_residual: fold(&|r| r.reconstruction_residual),
            reduced_samples: self.rows.iter().filter(|r| r.reduced).count(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,c,p,theta,mu,dist_h12,dist_h1,residual\n");
        for r in &self.rows {
            let cols = [
                r.t, r.c, r.p, r.theta, r.mu, r.dist_h12, r.dist_h1, r.residual,
            ];
            let line: Vec<String> = cols.iter().map(|x| fmt_f64(*x)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }
}

/// Decomposes every sample of `traj`, seeding each Newton solve with the
/// previous frame. Samples where the four-parameter map degenerates use
/// the two-parameter frame.
pub fn track_modulation(
    traj: &TrajectoryRecord,
    p_init: f64,
    opts: &ModulationOptions,
) -> Result<ModulationTrack, ModulationError> {
    check_p(p_init)?;
    let energy0 = traj
        .states
        .first()
        .map(|s| higher_charge(s))
        .ok_or(ModulationError::Empty)?;
    let mut rows = Vec::with_capacity(traj.states.len());
    let mut last_full: Option<FrameSeed> = None;
    for (index, (t, state)) in traj.times.iter().zip(&traj.states).enumerate() {
        let at = |e: ModulationError| ModulationError::AtSample {
            index,
            source: Box::new(e),
        };
        let frame = if p_init < P_SWITCH {
            decompose_p0_with(state, opts).map_err(at)?
        } else {
            let attempt = match last_full {
                Some(seed) => decompose_seeded(state, seed, opts)
                    .or_else(|_| decompose_with(state, seed.p.max(P_SWITCH), opts)),
                None => decompose_with(state, p_init, opts),
            };
            match attempt {
                Ok(f) => f,
                Err(ModulationError::DegenerateJacobian { .. }) => {
                    decompose_p0_with(state, opts).map_err(at)?
                }
                Err(e) => return Err(at(e)),
            }
        };
        if !frame.reduced {
            last_full = Some(FrameSeed::from(&frame));
        }
        let dist_h12 = orbit_distance(state, frame.p, WeightedNormOrder::HALF).map_err(at)?;
        let dist_h1 = orbit_distance(state, frame.p, WeightedNormOrder::ONE).map_err(at)?;
        rows.push(TrackRow {
            t: *t,
            c: frame.c,
            p: frame.p,
            theta: frame.theta,
            mu: frame.mu,
            dist_h12: dist_h12.distance,
            dist_h1: dist_h1.distance,
            residual: (frame.energy_budget() - energy0).abs(),
            constraint_residual: frame.constraint_residual,
            reconstruction_residual: frame.reconstruction_residual(state),
            reduced: frame.reduced,
        });
    }
    Ok(ModulationTrack {
        p_init,
        energy0,
        rows,
    })
}
