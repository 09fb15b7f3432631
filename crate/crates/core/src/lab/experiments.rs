use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::io::{ensure_dir, write_json, write_text, RunMetadata};
use super::perturbation::{member_rng, unit_disc};
use super::{generate_perturbation, ExperimentConfig, ExperimentKind, LabError, PerturbationSpec};
use crate::flow::{integrate, vector_field_fast, vector_field_naive, StepStats, TrajectoryRecord};
use crate::linearized::{
    appendix_identities, build_ground_ops, build_single_mode_ops, coercivity, commutators,
    ground_frequency, hessian_residual, inverse_mass_pairing, ladder_check, lambda_star,
    mode_energy_relation, mu_ladder, single_mode_frequencies, spectrum, stability_spectrum,
    AppendixReport, ModeEnergyReport, Which,
};
use crate::modulation::{
    decompose, orbit_distance, track_modulation, ModulationOptions, ModulationTrack,
};
use crate::observables::{
    charge, energy_fast, energy_naive, gap, hankel_identity_check, higher_charge,
};
use crate::state::{
    fmt_f64, geometric, ground_state, truncation_for, ModeVector, WeightedNormOrder,
};

const SPECTRUM_TOL: f64 = 1e-6;
const SINGLE_MODE_TOL: f64 = 1e-10;
const COMMUTATOR_TOL: f64 = 1e-8;
const LADDER_TOL: f64 = 1e-9;
const IDENTITY_TOL: f64 = 1e-12;
const GEOMETRIC_SAMPLES: usize = 100;
/// Streams at or above this offset are reserved for auxiliary draws so they
/// never collide with ensemble members.
const AUX_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Serialize)]
pub enum RunOutcome {
    Simulate(SimulateReport),
    Spectrum(SpectrumSuiteReport),
    Inequality(InequalityReport),
    Decompose(DecomposeReport),
    DriftStudy(DriftSummary),
    VerifyIdentities(IdentitiesReport),
}

impl RunOutcome {
    /// False when a closed-form comparison missed its tolerance.
    pub fn passed(&self) -> bool {
        match self {
            RunOutcome::Spectrum(r) => r.failures.is_empty(),
            RunOutcome::Inequality(r) => r.min_gap >= -1e-10 && r.geometric_max_gap <= 1e-9,
            RunOutcome::VerifyIdentities(r) => r.failures.is_empty(),
            RunOutcome::DriftStudy(r) => r.failed == 0,
            _ => true,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serializes")
    }
}

/// Runs the configured experiment and writes its artifacts under `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, LabError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ExperimentKind::Simulate => RunOutcome::Simulate(run_simulate(cfg)?),
        ExperimentKind::Spectrum => RunOutcome::Spectrum(run_spectrum_suite(cfg)?),
        ExperimentKind::Inequality => RunOutcome::Inequality(run_inequality_scan(cfg)?),
        ExperimentKind::Decompose => RunOutcome::Decompose(run_decompose(cfg)?),
        ExperimentKind::DriftStudy => RunOutcome::DriftStudy(run_drift_study(cfg)?),
        ExperimentKind::VerifyIdentities => {
            RunOutcome::VerifyIdentities(run_verify_identities(cfg)?)
        }
    })
}

fn perturbation_spec(cfg: &ExperimentConfig) -> PerturbationSpec {
    PerturbationSpec {
        support: 0..cfg.support,
        delta: cfg.delta,
        zero_mode0: cfg.zero_mode0,
    }
}

/// `A(p0)` plus the seeded perturbation of member `stream`.
fn initial_state(cfg: &ExperimentConfig, stream: u64) -> Result<ModeVector, LabError> {
    let tail = cfg.p0.powi(cfg.n as i32);
    if tail > 1e-12 {
        log::warn!(
            "p0^N = {tail:.3e}: ground state poorly resolved at N = {}",
            cfg.n
        );
    }
    let base = ground_state(cfg.p0, cfg.n)?;
    let kick = generate_perturbation(&perturbation_spec(cfg), cfg.n, cfg.seed, stream)?;
    Ok(ModeVector::new(
        base.iter().zip(kick.iter()).map(|(a, b)| a + b).collect(),
    )?)
}

fn metadata(dir: &Path, cfg: &ExperimentConfig, started: Instant) -> Result<(), LabError> {
    write_json(
        dir,
        "metadata.json",
        &RunMetadata::new(cfg, started.elapsed().as_secs_f64()),
    )
}

fn csv_modes(n: usize) -> Vec<usize> {
    (0..n.min(4)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub truncation: usize,
    pub samples: usize,
    /// Relative drift of `(H, Q, E)`.
    pub max_drift: (f64, f64, f64),
    pub stats: StepStats,
    pub wall_time: f64,
}

pub fn run_simulate(cfg: &ExperimentConfig) -> Result<SimulateReport, LabError> {
    let started = Instant::now();
    let alpha0 = initial_state(cfg, 0)?;
    let record = integrate(&alpha0, &cfg.integrator)?;
    let dir = ensure_dir(&cfg.out)?;
    write_text(&dir, "initial_state.csv", &alpha0.to_csv())?;
    write_text(&dir, "trajectory.csv", &record.to_csv(&csv_modes(cfg.n)))?;
    write_text(&dir, "final_state.csv", &record.final_state().to_csv())?;
    let report = SimulateReport {
        truncation: cfg.n,
        samples: record.times.len(),
        max_drift: record.max_drift(),
        stats: record.stats,
        wall_time: record.wall_time,
    };
    write_json(&dir, "report.json", &report)?;
    metadata(&dir, cfg, started)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub truncation: usize,
    pub samples: usize,
    /// `min (Q^2 - H)` over random states.
    pub min_gap: f64,
    /// `min (Q^2 - H)/Q^2` over random states.
    pub min_relative_gap: f64,
    pub geometric_samples: usize,
    /// `max (Q^2 - H)` over random geometric sequences with `|p| <= 0.8`.
    pub geometric_max_gap: f64,
    /// Gap of `(1, 1, 0, ...)`.
    pub pair_gap: f64,
}

/// Random state with entries uniform in the unit disc.
fn random_state(seed: u64, stream: u64, n: usize) -> Vec<Complex64> {
    let mut rng = member_rng(seed, stream);
    (0..n).map(|_| unit_disc(&mut rng)).collect()
}

pub fn run_inequality_scan(cfg: &ExperimentConfig) -> Result<InequalityReport, LabError> {
    let started = Instant::now();
    let n = cfg.n;
    let (min_gap, min_rel) = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|k| {
            let alpha = random_state(cfg.seed, k, n);
            let g = gap(&alpha);
            let q = charge(&alpha);
            (g, g / (q * q))
        })
        .reduce(
            || (f64::INFINITY, f64::INFINITY),
            |a, b| (a.0.min(b.0), a.1.min(b.1)),
        );
    let geo: Vec<(Complex64, Complex64, usize, f64)> = (0..GEOMETRIC_SAMPLES as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = member_rng(cfg.seed, AUX_STREAM + k);
            let c = unit_disc(&mut rng);
            let p = 0.8 * unit_disc(&mut rng);
            let len = truncation_for(p.norm(), 1e-20, 16);
            (c, p, len, gap(&geometric(c, p, len)))
        })
        .collect();
    let mut pair = vec![Complex64::default(); n];
    pair[0] = Complex64::new(1.0, 0.0);
    pair[1] = Complex64::new(1.0, 0.0);
    let report = InequalityReport {
        truncation: n,
        samples: cfg.samples,
        min_gap,
        min_relative_gap: min_rel,
        geometric_samples: geo.len(),
        geometric_max_gap: geo.iter().fold(f64::NEG_INFINITY, |m, g| m.max(g.3)),
        pair_gap: gap(&pair),
    };
    let dir = ensure_dir(&cfg.out)?;
    let mut csv = String::from("re_c,im_c,re_p,im_p,truncation,gap\n");
    for (c, p, len, g) in &geo {
        csv.push_str(&format!(
            "{},{},{},{},{len},{}\n",
            fmt_f64(c.re),
            fmt_f64(c.im),
            fmt_f64(p.re),
            fmt_f64(p.im),
            fmt_f64(*g)
        ));
    }
    write_text(&dir, "geometric.csv", &csv)?;
    write_json(&dir, "inequality.json", &report)?;
    metadata(&dir, cfg, started)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundSuiteEntry {
    pub p: f64,
    pub truncation: usize,
    pub minus_top: Vec<f64>,
    pub plus_top: Vec<f64>,
    /// Largest deviation of the top twelve eigenvalues from
    /// `{0, 0, -1, ..., -10}` and `{lambda_*, 0, -1, ..., -10}`.
    pub spectrum_error: f64,
    /// `Omega_m` for `m = 2..=10`.
    pub omegas: Vec<f64>,
    pub frequency_error: f64,
    pub zero_count: usize,
    pub geometric_multiplicity: usize,
    pub jordan_partners: usize,
    pub algebraic_multiplicity: usize,
    pub chains_have_length_two: bool,
    pub stable: bool,
    pub commutator: f64,
    pub weighted_commutator: f64,
    pub ladder_eigen_residual: Option<f64>,
    pub ladder_lowering_angle: Option<f64>,
    pub mu_ladder_residual: Option<f64>,
    pub coercivity: (f64, f64),
    pub inverse_mass_pairing: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleModeSuiteEntry {
    pub mode: usize,
    pub truncation: usize,
    pub frequency_error: f64,
    pub computed: usize,
    pub expected: usize,
    pub zero_count: usize,
    /// `(positive, zero, negative)` eigenvalue counts.
    pub plus_signature: (usize, usize, usize),
    pub minus_signature: (usize, usize, usize),
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSuiteReport {
    pub ground: Vec<GroundSuiteEntry>,
    pub single_mode: Vec<SingleModeSuiteEntry>,
    pub appendix: Vec<AppendixReport>,
    pub mode_energy: Vec<ModeEnergyReport>,
    pub failures: Vec<String>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn ground_entry(p: f64, n: usize, seed: u64) -> Result<(GroundSuiteEntry, [String; 3]), LabError> {
    let ops = build_ground_ops(p, n)?;
    let minus = spectrum(&ops, Which::Minus)?;
    let plus = spectrum(&ops, Which::Plus)?;
    let top = 12.min(n);
    let mut expect_minus = vec![0.0, 0.0];
    expect_minus.extend((1..=10).map(|k| -(k as f64)));
    expect_minus.truncate(top);
    let mut expect_plus = expect_minus.clone();
    expect_plus[0] = lambda_star(p);
    let spectrum_error = max_abs_diff(&minus.eigenvalues[..top], &expect_minus)
        .max(max_abs_diff(&plus.eigenvalues[..top], &expect_plus));

    let stab = stability_spectrum(&ops)?;
    let count = 9.min(stab.omegas.len());
    let omegas = stab.omegas[..count].to_vec();
    let expected: Vec<f64> = (2..2 + count).map(ground_frequency).collect();
    let frequency_error = max_abs_diff(&omegas, &expected);

    let (commutator, weighted_commutator) = commutators(&ops, 64.min(n / 2))?;
    let (ladder_eigen_residual, ladder_lowering_angle) = if p <= 0.6 && n >= 12 {
        let l = ladder_check(p, n, 10, seed)?;
        (Some(l.max_eigen_residual()), Some(l.lowering_angle))
    } else {
        (None, None)
    };
    let mu_ladder_residual = if p > 0.0 {
        let r = mu_ladder(p, 6, n)?;
        Some(
            r.entries
                .iter()
                .fold(0.0f64, |m, e| m.max(e.eigen_residual)),
        )
    } else {
        None
    };
    let entry = GroundSuiteEntry {
        p,
        truncation: n,
        minus_top: minus.eigenvalues[..top].to_vec(),
        plus_top: plus.eigenvalues[..top].to_vec(),
        spectrum_error,
        omegas,
        frequency_error,
        zero_count: stab.zero_count,
        geometric_multiplicity: stab.zero_modes.geometric_multiplicity,
        jordan_partners: stab.zero_modes.jordan_partners,
        algebraic_multiplicity: stab.zero_modes.algebraic_multiplicity,
        chains_have_length_two: stab.zero_modes.chains_have_length_two,
        stable: stab.is_spectrally_stable(),
        commutator,
        weighted_commutator,
        ladder_eigen_residual,
        ladder_lowering_angle,
        mu_ladder_residual,
        coercivity: coercivity(&ops)?,
        inverse_mass_pairing: inverse_mass_pairing(&ops)?,
    };
    Ok((entry, [minus.to_csv(), plus.to_csv(), stab.to_csv()]))
}

fn single_mode_entry(mode: usize, n: usize) -> Result<(SingleModeSuiteEntry, String), LabError> {
    let ops = build_single_mode_ops(mode, 1.0, n)?;
    let stab = stability_spectrum(&ops)?;
    let closed = single_mode_frequencies(mode, n);
    let entry = SingleModeSuiteEntry {
        mode,
        truncation: n,
        frequency_error: max_abs_diff(&stab.omegas, &closed),
        computed: stab.omegas.len(),
        expected: closed.len(),
        zero_count: stab.zero_count,
        plus_signature: spectrum(&ops, Which::Plus)?.signature(),
        minus_signature: spectrum(&ops, Which::Minus)?.signature(),
        stable: stab.is_spectrally_stable(),
    };
    Ok((entry, stab.to_csv()))
}

pub fn run_spectrum_suite(cfg: &ExperimentConfig) -> Result<SpectrumSuiteReport, LabError> {
    let started = Instant::now();
    let dir = ensure_dir(&cfg.out)?;
    let mut grid = vec![0.0, 0.3, 0.6];
    if !grid.contains(&cfg.p0) {
        grid.push(cfg.p0);
    }
    let results: Vec<_> = grid
        .par_iter()
        .map(|&p| ground_entry(p, cfg.n, cfg.seed))
        .collect::<Result<_, _>>()?;
    let mut failures = Vec::new();
    let mut ground = Vec::new();
    for (entry, [minus, plus, omega]) in results {
        let tag = format!("{:.3}", entry.p);
        write_text(&dir, &format!("ground_p{tag}_minus.csv"), &minus)?;
        write_text(&dir, &format!("ground_p{tag}_plus.csv"), &plus)?;
        write_text(&dir, &format!("ground_p{tag}_omega.csv"), &omega)?;
        if entry.spectrum_error > SPECTRUM_TOL {
            failures.push(format!(
                "p={tag}: eigenvalue error {:e}",
                entry.spectrum_error
            ));
        }
        if entry.frequency_error > SPECTRUM_TOL {
            failures.push(format!(
                "p={tag}: frequency error {:e}",
                entry.frequency_error
            ));
        }
        if entry.geometric_multiplicity != 3 || entry.jordan_partners != 1 {
            failures.push(format!(
                "p={tag}: zero eigenvalue multiplicity {} with {} partners",
                entry.geometric_multiplicity, entry.jordan_partners
            ));
        }
        if entry.commutator.max(entry.weighted_commutator) > COMMUTATOR_TOL {
            failures.push(format!("p={tag}: commutator {:e}", entry.commutator));
        }
        if let Some(r) = entry.ladder_eigen_residual {
            if r > LADDER_TOL {
                failures.push(format!("p={tag}: ladder residual {r:e}"));
            }
        }
        ground.push(entry);
    }
    let mut single_mode = Vec::new();
    for mode in 0..=2 {
        if cfg.n <= 2 * mode + 2 {
            continue;
        }
        let (entry, csv) = single_mode_entry(mode, cfg.n)?;
        write_text(&dir, &format!("single_mode_{mode}_omega.csv"), &csv)?;
        if entry.frequency_error > SINGLE_MODE_TOL {
            failures.push(format!(
                "mode {mode}: frequency error {:e}",
                entry.frequency_error
            ));
        }
        single_mode.push(entry);
    }
    let mut appendix = Vec::new();
    let mut mode_energy = Vec::new();
    for p in [0.3, 0.5, 0.7] {
        let rep = appendix_identities(p, 50)?;
        if rep.max_relative_error() > IDENTITY_TOL || !rep.kernel_row_sum_exact {
            failures.push(format!(
                "p={p}: appendix identity error {:e}",
                rep.max_relative_error()
            ));
        }
        appendix.push(rep);
        mode_energy.push(mode_energy_relation(p, truncation_for(p, 1e-20, 64))?);
    }
    let report = SpectrumSuiteReport {
        ground,
        single_mode,
        appendix,
        mode_energy,
        failures,
    };
    write_json(&dir, "spectrum_suite.json", &report)?;
    metadata(&dir, cfg, started)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeReport {
    pub c: f64,
    pub p: f64,
    pub theta: f64,
    pub mu: f64,
    pub theta_orbit: f64,
    pub reduced: bool,
    pub iterations: usize,
    pub constraint_residual: f64,
    pub reconstruction_residual: f64,
    pub dist_l2: f64,
    pub dist_h12: f64,
    pub dist_h1: f64,
    /// `|c^2 + <Ma,a> + <Mb,b> - Q|`.
    pub charge_budget_error: f64,
    /// `|c^2 (1+p^2)/(1-p^2) + |Ma|^2 + |Mb|^2 - E|`.
    pub energy_budget_error: f64,
}

pub fn run_decompose(cfg: &ExperimentConfig) -> Result<DecomposeReport, LabError> {
    let started = Instant::now();
    let alpha = initial_state(cfg, 0)?;
    let frame = decompose(&alpha, cfg.p0)?;
    let dist = |s| orbit_distance(&alpha, frame.p, s).map(|d| d.distance);
    let report = DecomposeReport {
        c: frame.c,
        p: frame.p,
        theta: frame.theta,
        mu: frame.mu,
        theta_orbit: frame.theta_orbit(),
        reduced: frame.reduced,
        iterations: frame.iterations,
        constraint_residual: frame.constraint_residual,
        reconstruction_residual: frame.reconstruction_residual(&alpha),
        dist_l2: dist(WeightedNormOrder::L2)?,
        dist_h12: dist(WeightedNormOrder::HALF)?,
        dist_h1: dist(WeightedNormOrder::ONE)?,
        charge_budget_error: (frame.charge_budget() - charge(&alpha)).abs(),
        energy_budget_error: (frame.energy_budget() - higher_charge(&alpha)).abs(),
    };
    let dir = ensure_dir(&cfg.out)?;
    let mut csv = String::from("n,a,b\n");
    for (k, (a, b)) in frame.a.iter().zip(&frame.b).enumerate() {
        csv.push_str(&format!("{k},{},{}\n", fmt_f64(*a), fmt_f64(*b)));
    }
    write_text(&dir, "state.csv", &alpha.to_csv())?;
    write_text(&dir, "remainder.csv", &csv)?;
    write_json(&dir, "decompose.json", &report)?;
    metadata(&dir, cfg, started)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub member: usize,
    pub ok: bool,
    pub error: Option<String>,
    pub sup_dist_h12: f64,
    pub sup_dist_h1: f64,
    pub min_p: f64,
    pub max_p_drop: f64,
    /// `sup_t dist_{h^{1/2}} / delta`.
    pub h12_constant: Option<f64>,
    /// `sup_t dist_{h^1}(t) / (delta + max(p0 - p(t), 0)^{1/2})`.
    pub drift_ratio: Option<f64>,
    pub max_energy_residual: f64,
    /// Largest relative drift of `H`, `Q`, `E` over the run.
    pub max_conservation_drift: f64,
}

impl RunSummary {
    fn failed(member: usize, error: String) -> Self {
        Self {
            member,
            ok: false,
            error: Some(error),
            sup_dist_h12: f64::NAN,
            sup_dist_h1: f64::NAN,
            min_p: f64::NAN,
            max_p_drop: f64::NAN,
            h12_constant: None,
            drift_ratio: None,
            max_energy_residual: f64::NAN,
            max_conservation_drift: f64::NAN,
        }
    }

    /// Summary statistics computed from a track (the columns of its CSV).
    pub fn from_track(
        member: usize,
        track: &ModulationTrack,
        delta: f64,
        record: &TrajectoryRecord,
    ) -> Self {
        let s = track.summary();
        let ratio = track
            .rows
            .iter()
            .map(|r| {
                let den = delta + (track.p_init - r.p).max(0.0).sqrt();
                if den > 0.0 {
                    r.dist_h1 / den
                } else {
                    f64::NAN
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let (dh, dq, de) = record.max_drift();
        Self {
            member,
            ok: true,
            error: None,
            sup_dist_h12: s.sup_dist_h12,
            sup_dist_h1: s.sup_dist_h1,
            min_p: s.min_p,
            max_p_drop: s.max_p_drop,
            h12_constant: (delta > 0.0).then(|| s.sup_dist_h12 / delta),
            drift_ratio: ratio.is_finite().then_some(ratio),
            max_energy_residual: s.max_energy_residual,
            max_conservation_drift: dh.max(dq).max(de),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleConstants {
    /// `max sup_t dist_{h^{1/2}} / delta`.
    pub h12: Option<f64>,
    /// Largest drift ratio over the ensemble.
    pub drift: Option<f64>,
    pub sup_dist_h12: f64,
    pub sup_dist_h1: f64,
    pub min_p: f64,
    pub max_p_drop: f64,
    pub max_energy_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftSummary {
    pub p0: f64,
    pub delta: f64,
    pub truncation: usize,
    pub t_end: f64,
    pub runs: Vec<RunSummary>,
    pub failed: usize,
    pub constants: EnsembleConstants,
}

fn member_run(cfg: &ExperimentConfig, member: usize) -> Result<RunSummary, LabError> {
    let alpha0 = initial_state(cfg, member as u64)?;
    let record = integrate(&alpha0, &cfg.integrator)?;
    let track = track_modulation(&record, cfg.p0, &ModulationOptions::default())?;
    let dir = ensure_dir(&cfg.out.join(format!("run_{member:03}")))?;
    write_text(&dir, "initial_state.csv", &alpha0.to_csv())?;
    write_text(&dir, "trajectory.csv", &record.to_csv(&csv_modes(cfg.n)))?;
    write_text(&dir, "track.csv", &track.to_csv())?;
    write_text(&dir, "track_summary.json", &track.summary_json())?;
    Ok(RunSummary::from_track(member, &track, cfg.delta, &record))
}

fn fold_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values.flatten().reduce(f64::max)
}

/// Seeded ensemble of perturbed ground states, integrated and tracked.
/// Failed members are reported, not fatal.
pub fn run_drift_study(cfg: &ExperimentConfig) -> Result<DriftSummary, LabError> {
    let started = Instant::now();
    let dir = ensure_dir(&cfg.out)?;
    let runs: Vec<RunSummary> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|k| {
            member_run(cfg, k).unwrap_or_else(|e| {
                log::warn!("ensemble member {k} failed: {e}");
                RunSummary::failed(k, e.to_string())
            })
        })
        .collect();
    let ok: Vec<&RunSummary> = runs.iter().filter(|r| r.ok).collect();
    let maxf =
        |f: fn(&RunSummary) -> f64| ok.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, f64::max);
    let constants = EnsembleConstants {
        h12: fold_opt(ok.iter().map(|r| r.h12_constant)),
        drift: fold_opt(ok.iter().map(|r| r.drift_ratio)),
        sup_dist_h12: maxf(|r| r.sup_dist_h12),
        sup_dist_h1: maxf(|r| r.sup_dist_h1),
        min_p: -maxf(|r| -r.min_p),
        max_p_drop: maxf(|r| r.max_p_drop),
        max_energy_residual: maxf(|r| r.max_energy_residual),
    };
    let summary = DriftSummary {
        p0: cfg.p0,
        delta: cfg.delta,
        truncation: cfg.n,
        t_end: cfg.integrator.t_end,
        failed: runs.len() - ok.len(),
        runs,
        constants,
    };
    let opt = |x: Option<f64>| x.map_or_else(String::new, fmt_f64);
    let mut csv = String::from(
        "member,ok,sup_dist_h12,sup_dist_h1,min_p,max_p_drop,h12_constant,drift_ratio,max_energy_residual\n",
    );
    for r in &summary.runs {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.member,
            r.ok,
            fmt_f64(r.sup_dist_h12),
            fmt_f64(r.sup_dist_h1),
            fmt_f64(r.min_p),
            fmt_f64(r.max_p_drop),
            opt(r.h12_constant),
            opt(r.drift_ratio),
            fmt_f64(r.max_energy_residual)
        ));
    }
    write_text(&dir, "ensemble.csv", &csv)?;
    write_json(&dir, "ensemble.json", &summary)?;
    metadata(&dir, cfg, started)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub p0: f64,
    pub zero_mode0: bool,
    pub deltas: Vec<f64>,
    pub sup_dist_h1: Vec<f64>,
    pub sup_dist_h12: Vec<f64>,
    /// Least-squares slope of `log sup dist_{h^1}` against `log delta`.
    pub slope_h1: f64,
    pub slope_h12: f64,
    /// Largest energy-budget residual over all tracks.
    pub max_energy_residual: f64,
}

fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Tracks one perturbation direction at several sizes and fits how the
/// largest orbit distance scales with the size.
pub fn single_mode_scaling(
    cfg: &ExperimentConfig,
    deltas: &[f64],
) -> Result<ScalingReport, LabError> {
    cfg.validate()?;
    if deltas.len() < 2 || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(LabError::Validation(
            "need at least two positive deltas".into(),
        ));
    }
    let sups: Vec<(f64, f64, f64)> = deltas
        .par_iter()
        .map(|&delta| {
            let member = ExperimentConfig {
                delta,
                ..cfg.clone()
            };
            let alpha0 = initial_state(&member, 0)?;
            let record = integrate(&alpha0, &member.integrator)?;
            let track = track_modulation(&record, member.p0, &ModulationOptions::default())?;
            let s = track.summary();
            Ok((s.sup_dist_h1, s.sup_dist_h12, s.max_energy_residual))
        })
        .collect::<Result<_, LabError>>()?;
    let h1: Vec<f64> = sups.iter().map(|s| s.0).collect();
    let h12: Vec<f64> = sups.iter().map(|s| s.1).collect();
    Ok(ScalingReport {
        p0: cfg.p0,
        zero_mode0: cfg.zero_mode0,
        deltas: deltas.to_vec(),
        slope_h1: log_slope(deltas, &h1),
        slope_h12: log_slope(deltas, &h12),
        sup_dist_h1: h1,
        sup_dist_h12: h12,
        max_energy_residual: sups.iter().fold(0.0, |m, s| m.max(s.2)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HessianCheck {
    pub p: f64,
    pub residual: f64,
    pub residual_half: f64,
    /// `residual / residual_half`; at least 8 for a cubic remainder.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentitiesReport {
    pub appendix: Vec<AppendixReport>,
    pub mode_energy: Vec<ModeEnergyReport>,
    /// Largest `|lhs - rhs| / max(1, |lhs|)` over random palindromes.
    pub hankel_error: f64,
    pub hessian: Vec<HessianCheck>,
    /// Fast vs cubic-cost evaluations on random states, relative.
    pub energy_oracle_error: f64,
    pub field_oracle_error: f64,
    pub failures: Vec<String>,
}

/// Hessian remainder ratio along a seeded decaying direction.
pub fn hessian_check(p: f64, n: usize, seed: u64) -> Result<HessianCheck, LabError> {
    let ops = build_ground_ops(p, n)?;
    let mut rng = member_rng(seed, AUX_STREAM + 1000);
    let dir: Vec<Complex64> = (0..n)
        .map(|k| 0.7f64.powi(k as i32) * unit_disc(&mut rng))
        .collect();
    let eval = |s: f64| -> Result<f64, LabError> {
        let a: Vec<f64> = dir.iter().map(|z| s * z.re).collect();
        let b: Vec<f64> = dir.iter().map(|z| s * z.im).collect();
        Ok(hessian_residual(&ops, &a, &b)?.abs())
    };
    let residual = eval(1e-2)?;
    let residual_half = eval(5e-3)?;
    Ok(HessianCheck {
        p,
        residual,
        residual_half,
        ratio: residual / residual_half,
    })
}

pub fn run_verify_identities(cfg: &ExperimentConfig) -> Result<IdentitiesReport, LabError> {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut appendix = Vec::new();
    let mut mode_energy = Vec::new();
    for p in [0.3, 0.5, 0.7] {
        let rep = appendix_identities(p, 50)?;
        if rep.max_relative_error() > IDENTITY_TOL || !rep.kernel_row_sum_exact {
            failures.push(format!(
                "p={p}: appendix identity error {:e}",
                rep.max_relative_error()
            ));
        }
        appendix.push(rep);
        let me = mode_energy_relation(p, truncation_for(p, 1e-20, 64))?;
        if (me.derivative_energy_pairing - me.derivative_closed_form).abs() > 1e-10 {
            failures.push(format!("p={p}: derivative pairing mismatch"));
        }
        mode_energy.push(me);
    }

    let hankel_error = (1..=24usize)
        .map(|len| {
            let mut rng = member_rng(cfg.seed, AUX_STREAM + 2000 + len as u64);
            let mut x = vec![Complex64::default(); len];
            for k in 0..len.div_ceil(2) {
                let z = unit_disc(&mut rng);
                x[k] = z;
                x[len - 1 - k] = z;
            }
            let (lhs, rhs) = hankel_identity_check(&x).expect("palindrome");
            (lhs - rhs).abs() / lhs.abs().max(1.0)
        })
        .fold(0.0, f64::max);
    if hankel_error > 1e-12 {
        failures.push(format!("palindromic identity error {hankel_error:e}"));
    }

    let mut hessian = Vec::new();
    for p in [0.0, 0.5] {
        let h = hessian_check(p, truncation_for(p, 1e-18, 48), cfg.seed)?;
        if !(h.ratio >= 7.0) {
            failures.push(format!("p={p}: Hessian remainder ratio {}", h.ratio));
        }
        hessian.push(h);
    }

    let (energy_oracle_error, field_oracle_error) = (0..200u64)
        .into_par_iter()
        .map(|k| {
            let n = 1 + (k as usize % 48);
            let alpha = random_state(cfg.seed, AUX_STREAM + 3000 + k, n);
            let naive = energy_naive(&alpha).unwrap_or(f64::NAN);
            let e = ((energy_fast(&alpha) - naive) / naive).abs();
            let f1 = vector_field_fast(&alpha);
            let f0 = vector_field_naive(&alpha);
            let num: f64 = f1.iter().zip(&f0).map(|(a, b)| (a - b).norm_sqr()).sum();
            let den: f64 = f0.iter().map(|b| b.norm_sqr()).sum();
            (e, (num / den.max(f64::MIN_POSITIVE)).sqrt())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    if !(energy_oracle_error <= 1e-12 && field_oracle_error <= 1e-12) {
        failures.push(format!(
            "fast/naive mismatch: energy {energy_oracle_error:e}, field {field_oracle_error:e}"
        ));
    }

    let report = IdentitiesReport {
        appendix,
        mode_energy,
        hankel_error,
        hessian,
        energy_oracle_error,
        field_oracle_error,
        failures,
    };
    let dir = ensure_dir(&cfg.out)?;
    write_json(&dir, "identities.json", &report)?;
    metadata(&dir, cfg, started)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ExperimentKind, dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(kind);
        c.out = dir.to_path_buf();
        c.n = 24;
        c.integrator.t_end = 1.0;
        c
    }

    #[test]
    fn zero_delta_drift_is_stationary() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = cfg(ExperimentKind::DriftStudy, tmp.path());
        c.delta = 0.0;
        c.p0 = 0.3;
        c.ensemble = 2;
        let s = run_drift_study(&c).unwrap();
        assert_eq!(s.failed, 0);
        for r in &s.runs {
            assert!(r.sup_dist_h1 < 1e-8, "{}", r.sup_dist_h1);
            assert!((r.min_p - 0.3).abs() < 1e-8);
            assert!(r.h12_constant.is_none());
        }
        assert!(tmp.path().join("run_001/track.csv").exists());
        assert!(tmp.path().join("ensemble.json").exists());
    }

    #[test]
    fn drift_outputs_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            let mut c = cfg(ExperimentKind::DriftStudy, d.path());
            c.ensemble = 3;
            c.seed = 11;
            run_drift_study(&c).unwrap();
        }
        for name in [
            "ensemble.csv",
            "run_002/track.csv",
            "run_000/trajectory.csv",
        ] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
    }

    #[test]
    fn summary_recomputable_from_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = cfg(ExperimentKind::DriftStudy, tmp.path());
        c.ensemble = 1;
        let s = run_drift_study(&c).unwrap();
        let text = std::fs::read_to_string(tmp.path().join("run_000/track.csv")).unwrap();
        let mut sup = 0.0f64;
        for line in text.lines().skip(1) {
            let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            sup = sup.max(cols[6]);
        }
        assert_eq!(sup, s.runs[0].sup_dist_h1);
    }

    #[test]
    fn inequality_small() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = cfg(ExperimentKind::Inequality, tmp.path());
        c.samples = 200;
        let r = run_inequality_scan(&c).unwrap();
        assert!(r.min_gap >= -1e-10);
        assert!(r.geometric_max_gap <= 1e-9);
        assert_eq!(r.pair_gap, 2.0);
    }

    #[test]
    fn log_slope_exact() {
        let x = [1e-3, 1e-4, 1e-5];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.sqrt()).collect();
        assert!((log_slope(&x, &y) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decompose_and_simulate_write_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let r = run_decompose(&cfg(ExperimentKind::Decompose, tmp.path())).unwrap();
        assert!(r.constraint_residual <= 1e-10 && r.reconstruction_residual <= 1e-12);
        assert!(r.energy_budget_error < 1e-10);
        let s = run_simulate(&cfg(ExperimentKind::Simulate, tmp.path())).unwrap();
        assert!(s.max_drift.0 < 1e-8);
        for f in [
            "remainder.csv",
            "decompose.json",
            "trajectory.csv",
            "metadata.json",
        ] {
            assert!(tmp.path().join(f).exists(), "{f}");
        }
    }
}
