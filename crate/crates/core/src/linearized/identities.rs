//! Closed-form geometric sums behind the ground-state operator entries and
//! eigenvectors, each checked against direct summation.

use serde::Serialize;

use super::LinearizedError;
use crate::state::{ground_amplitudes, ground_derivative};
use crate::summation::NeumaierSum;

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub max_relative_error: f64,
    pub cases: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AppendixReport {
    pub p: f64,
    pub n_max: usize,
    pub checks: Vec<IdentityCheck>,
    /// Integer identity `sum_k S = (1+j)(1+n)` held exactly for all cases.
    pub kernel_row_sum_exact: bool,
}

impl AppendixReport {
    pub fn max_relative_error(&self) -> f64 {
        self.checks
            .iter()
            .fold(0.0, |m, c| m.max(c.max_relative_error))
    }
}

/// Sums `term(k)` for `k >= start` until the terms are negligible.
fn sum_tail(start: usize, min_terms: usize, term: impl Fn(usize) -> f64) -> f64 {
    let mut acc = NeumaierSum::new();
    let mut k = start;
    loop {
        let t = term(k);
        acc.add(t);
        if k >= start + min_terms && t.abs() <= 1e-22 * acc.value().abs() {
            break;
        }
        if k > start + 100_000 {
            break;
        }
        k += 1;
    }
    acc.value()
}

fn rel(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

fn s4(a: usize, b: usize, c: usize, d: usize) -> usize {
    a.min(b).min(c).min(d) + 1
}

/// Checks the partial geometric sums, the layered kernel sums and the
/// shifted geometric series for all indices up to `n_max`.
pub fn appendix_identities(p: f64, n_max: usize) -> Result<AppendixReport, LinearizedError> {
    if !(p.is_finite() && p > 0.0 && p < 1.0) {
        return Err(LinearizedError::InvalidP(p));
    }
    let q = 1.0 - p * p;
    let pw = |k: usize| p.powi(k as i32);
    let mut checks = Vec::new();

    let mut push = |name: &'static str, errs: Vec<f64>| {
        checks.push(IdentityCheck {
            name,
            max_relative_error: errs.iter().fold(0.0, |m, e| m.max(*e)),
            cases: errs.len(),
        });
    };

    push(
        "geometric_partial_sum",
        (0..=n_max)
            .map(|n| {
                let direct: NeumaierSum = (0..=n).map(|k| pw(2 * k)).collect();
                rel(direct.value(), (1.0 - pw(2 * n + 2)) / q)
            })
            .collect(),
    );
    push(
        "weighted_geometric_partial_sum",
        (1..=n_max)
            .map(|n| {
                let direct: NeumaierSum = (0..=n).map(|k| k as f64 * pw(2 * k)).collect();
                let closed =
                    p * p * (1.0 - (n + 1) as f64 * pw(2 * n) + n as f64 * pw(2 * n + 2)) / (q * q);
                rel(direct.value(), closed)
            })
            .collect(),
    );

    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut exact = true;
    for n in 0..=n_max {
        for j in 0..=n_max {
            if j <= n {
                let direct = sum_tail(0, j + 4, |k| {
                    s4(n, k, j, n + k - j) as f64 * pw(n + 2 * k - j)
                });
                lower.push(rel(direct, (pw(n - j) - pw(2 + j + n)) / (q * q)));
            }
            if j >= n {
                let direct = sum_tail(j - n, n + 4, |k| {
                    s4(n, k, j, n + k - j) as f64 * pw(n + 2 * k - j)
                });
                upper.push(rel(direct, (pw(j - n) - pw(2 + j + n)) / (q * q)));
                let count: usize = (0..=n + j).map(|k| s4(n, j, k, n + j - k)).sum();
                exact &= count == (1 + j) * (1 + n);
            }
        }
    }
    push("layer_sum_lower", lower);
    push("layer_sum_upper", upper);

    push(
        "shifted_geometric",
        (0..=n_max)
            .map(|n| {
                let direct = sum_tail(1, n + 4, |k| pw(k + k.abs_diff(n)));
                let closed = (p * p + n as f64 * q) / q * pw(n);
                rel(direct, closed)
            })
            .collect(),
    );
    push(
        "weighted_shifted_geometric",
        (0..=n_max)
            .map(|n| {
                let direct = sum_tail(1, n + 4, |k| k as f64 * pw(k + k.abs_diff(n)));
                let nf = n as f64;
                let closed = (2.0 * p * p + nf * (1.0 - p.powi(4)) + nf * nf * q * q)
                    / (2.0 * q * q)
                    * pw(n);
                rel(direct, closed)
            })
            .collect(),
    );

    Ok(AppendixReport {
        p,
        n_max,
        checks,
        kernel_row_sum_exact: exact,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeEnergyReport {
    pub p: f64,
    pub truncation: usize,
    /// `<M A', A>`; vanishes identically.
    pub derivative_charge_pairing: f64,
    /// `<M A', M A>` from the truncated vectors.
    pub derivative_energy_pairing: f64,
    /// `E'(p)/2 = 2p/(1-p^2)^2`, the exact value of the pairing.
    pub derivative_closed_form: f64,
    /// `sum (n+1)^2 p^{2n} (n(1-p^2) - 2p^2)` evaluated directly.
    pub reduced_series: f64,
    /// `2p^2/(1-p^2)^3`, the closed form of `reduced_series`; it differs
    /// from the pairing by the factor `p/(1-p^2)`.
    pub reduced_closed_form: f64,
}

/// Pairings of `M A'(p)` with `A(p)` and `M A(p)`.
pub fn mode_energy_relation(p: f64, n: usize) -> Result<ModeEnergyReport, LinearizedError> {
    if !(p.is_finite() && (0.0..1.0).contains(&p)) {
        return Err(LinearizedError::InvalidP(p));
    }
    let a = ground_amplitudes(p, n);
    let da = ground_derivative(p, n);
    let mut charge = NeumaierSum::new();
    let mut energy = NeumaierSum::new();
    let mut series = NeumaierSum::new();
    let q = 1.0 - p * p;
    for k in 0..n {
        let w = (k + 1) as f64;
        charge.add(w * da[k] * a[k]);
        energy.add(w * w * da[k] * a[k]);
        series.add(w * w * p.powi(2 * k as i32) * (k as f64 * q - 2.0 * p * p));
    }
    Ok(ModeEnergyReport {
        p,
        truncation: n,
        derivative_charge_pairing: charge.value(),
        derivative_energy_pairing: energy.value(),
        derivative_closed_form: 2.0 * p / (q * q),
        reduced_series: series.value(),
        reduced_closed_form: 2.0 * p * p / (q * q * q),
    })
}
