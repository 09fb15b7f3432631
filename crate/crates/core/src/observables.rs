//! Conserved quantities `H`, `Q`, `E`, the gap `Q^2 - H` and the standing-wave
//! functional `K = H/2 - lambda Q`.

use num_complex::Complex64;
use thiserror::Error;

use crate::kernel::{min_plus_one, PairSumRow};
use crate::summation::{sum_for_size, ComplexNeumaierSum, NeumaierSum, COMPENSATED_THRESHOLD};

#[derive(Debug, Error, PartialEq)]
pub enum ObservableError {
    #[error("quartic sum has imaginary part {imag:e} against real part {real:e}")]
    ImaginaryEnergy { real: f64, imag: f64 },
    #[error("sequence is not palindromic at index {0}")]
    NotPalindromic(usize),
    #[error("sequence must have at least one entry")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedTriple {
    pub h: f64,
    pub q: f64,
    pub e: f64,
}

impl ConservedTriple {
    pub fn of(alpha: &[Complex64]) -> Self {
        Self {
            h: energy_fast(alpha),
            q: charge(alpha),
            e: higher_charge(alpha),
        }
    }

    /// Largest relative change of the three components against `reference`.
    pub fn max_relative_drift(&self, reference: &ConservedTriple) -> f64 {
        let rel = |x: f64, x0: f64| {
            if x0 == 0.0 {
                (x - x0).abs()
            } else {
                ((x - x0) / x0).abs()
            }
        };
        rel(self.h, reference.h)
            .max(rel(self.q, reference.q))
            .max(rel(self.e, reference.e))
    }
}

/// `Q = sum (n+1) |alpha_n|^2`.
pub fn charge(alpha: &[Complex64]) -> f64 {
    sum_for_size(
        alpha.len(),
        alpha
            .iter()
            .enumerate()
            .map(|(n, z)| (n + 1) as f64 * z.norm_sqr()),
    )
}

/// `E = sum (n+1)^2 |alpha_n|^2`.
pub fn higher_charge(alpha: &[Complex64]) -> f64 {
    sum_for_size(
        alpha.len(),
        alpha.iter().enumerate().map(|(n, z)| {
            let w = (n + 1) as f64;
            w * w * z.norm_sqr()
        }),
    )
}

/// Cubic-cost reference evaluation of the quartic Hamiltonian.
///
/// Sums over `n <= j` only, doubling the off-diagonal terms. Any imaginary
/// residue above `1e-12 max(|H|, Q^2)` is reported as an error.
pub fn energy_naive(alpha: &[Complex64]) -> Result<f64, ObservableError> {
    let len = alpha.len();
    let mut acc = ComplexNeumaierSum::new();
    let mut plain = Complex64::new(0.0, 0.0);
    let compensated = len > COMPENSATED_THRESHOLD;
    for n in 0..len {
        for j in n..len {
            let pair = (alpha[n] * alpha[j]).conj();
            let s = n + j;
            let k_lo = s.saturating_sub(len - 1);
            let k_hi = s.min(len - 1);
            let mut inner = Complex64::new(0.0, 0.0);
            for k in k_lo..=k_hi {
                let m = s - k;
                inner += min_plus_one(n, j, k, m) as f64 * alpha[k] * alpha[m];
            }
            let term = if n == j {
                pair * inner
            } else {
                2.0 * pair * inner
            };
            if compensated {
                acc.add(term);
            } else {
                plain += term;
            }
        }
    }
    let total = if compensated { acc.value() } else { plain };
    let scale = total.re.abs().max(charge(alpha).powi(2));
    if total.im.abs() > 1e-12 * scale {
        return Err(ObservableError::ImaginaryEnergy {
            real: total.re,
            imag: total.im,
        });
    }
    Ok(total.re)
}

/// Quadratic-cost Hamiltonian `H = sum_l sum_s |C_l(s)|^2` from the layered
/// pair sums; non-negative by construction.
pub fn energy_fast(alpha: &[Complex64]) -> f64 {
    let len = alpha.len();
    if len == 0 {
        return 0.0;
    }
    let mut row = PairSumRow::new(alpha);
    if len > COMPENSATED_THRESHOLD {
        let mut acc = NeumaierSum::new();
        loop {
            for z in row.active() {
                acc.add(z.norm_sqr());
            }
            if row.layer() + 1 >= len {
                break;
            }
            row.advance();
        }
        acc.value()
    } else {
        let mut acc = 0.0;
        loop {
            acc += row.active().iter().map(|z| z.norm_sqr()).sum::<f64>();
            if row.layer() + 1 >= len {
                break;
            }
            row.advance();
        }
        acc
    }
}

/// `G = Q^2 - H`; vanishes exactly on geometric sequences.
pub fn gap(alpha: &[Complex64]) -> f64 {
    let q = charge(alpha);
    q * q - energy_fast(alpha)
}

/// `K = H/2 - lambda Q`.
pub fn functional_k(alpha: &[Complex64], lambda: f64) -> f64 {
    0.5 * energy_fast(alpha) - lambda * charge(alpha)
}

/// Both sides of the palindromic quadratic-form identity behind the energy
/// bound.
///
/// For `x_0..x_n` with `x_k = x_{n-k}`, the left side is
/// `sum (k+1)(n+1-k)|x_k|^2 - sum_{j,k} [min(j, n-j, k, n-k)+1] conj(x_j) x_k`
/// and the right side is `sum_{j<k<=n/2} w_j w_k (j+1) |x_j - x_k|^2` with
/// `w = 2` except `w = 1` for the centre of an even-length index range.
pub fn hankel_identity_check(x: &[Complex64]) -> Result<(f64, f64), ObservableError> {
    if x.is_empty() {
        return Err(ObservableError::Empty);
    }
    let n = x.len() - 1;
    for k in 0..=n / 2 {
        if x[k] != x[n - k] {
            return Err(ObservableError::NotPalindromic(k));
        }
    }
    let mut diag = NeumaierSum::new();
    for (k, z) in x.iter().enumerate() {
        diag.add(((k + 1) * (n + 1 - k)) as f64 * z.norm_sqr());
    }
    let mut cross = ComplexNeumaierSum::new();
    for j in 0..=n {
        for k in 0..=n {
            let s = j.min(n - j).min(k).min(n - k) + 1;
            cross.add(s as f64 * x[j].conj() * x[k]);
        }
    }
    let lhs = diag.value() - cross.value().re;

    let half = n / 2;
    let w = |k: usize| if 2 * k == n { 1.0 } else { 2.0 };
    let mut rhs = NeumaierSum::new();
    for j in 0..half {
        for k in (j + 1)..=half {
            rhs.add(w(j) * w(k) * (j + 1) as f64 * (x[j] - x[k]).norm_sqr());
        }
    }
    Ok((lhs, rhs.value()))
}
