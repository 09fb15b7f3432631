use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::ops::{build_ground_ops, toeplitz_entry};
use super::LinearizedError;
use crate::state::{ground_amplitudes, ground_derivative};

/// Random probes per ladder identity.
const PROBES: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct LadderReport {
    pub p: f64,
    pub truncation: usize,
    /// Largest relative mismatch of `(2T-M) S a = S (2T-M-I) a`.
    pub creation_residual: f64,
    /// Largest relative mismatch of `(2T-M) S* a = S* (2T-M+I) a`.
    pub annihilation_residual: f64,
    /// `||S* v1 - (1-p^2) A'|| / ||(1-p^2) A'||`.
    pub lowering_residual: f64,
    /// Angle between `S* v1` and `A'`.
    pub lowering_angle: f64,
    /// `(m, ||(2T-M) v_m + m v_m|| / ||v_m||)` for `v_m = S^{m-1} v1`.
    pub eigen_residuals: Vec<(usize, f64)>,
    /// Same residual with the full `L_+` and `L_-` in place of `2T - M`.
    pub operator_residuals: Vec<(usize, f64, f64)>,
}

impl LadderReport {
    pub fn max_eigen_residual(&self) -> f64 {
        self.eigen_residuals.iter().fold(0.0, |m, r| m.max(r.1))
    }
}

/// First eigenvector of `2T - M` at eigenvalue `-1`:
/// `v_0 = p^2`, `v_n = (1-p^2)(n(1-p^2) - (1+p^2)) p^{n-2}` for `n >= 1`.
pub fn first_ladder_vector(p: f64, n: usize) -> Vec<f64> {
    let q = 1.0 - p * p;
    (0..n)
        .map(|k| match k {
            0 => p * p,
            1 => -2.0 * p * q,
            _ => q * (k as f64 * q - (1.0 + p * p)) * p.powi(k as i32 - 2),
        })
        .collect()
}

/// Row `n` of `(2T - M + shift I) v` for finitely supported `v`.
fn shifted_row(p: f64, v: &[f64], n: usize, shift: f64) -> f64 {
    let mut acc = 0.0;
    for (k, x) in v.iter().enumerate() {
        if *x != 0.0 {
            acc += 2.0 * toeplitz_entry(p, n, k) * x;
        }
    }
    let own = v.get(n).copied().unwrap_or(0.0);
    acc - (n + 1) as f64 * own + shift * own
}

/// Random vector supported on `[0, support)` with `<A, a> = <MA, a> = 0`.
fn constrained_probe(p: f64, support: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let mut a: Vec<f64> = (0..support).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = ground_amplitudes(p, support);
    let mg: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(k, x)| (k + 1) as f64 * x)
        .collect();
    // Gram-Schmidt on {A, MA}, then project twice for stability.
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let e1n = dot(&g, &g).sqrt();
    let e1: Vec<f64> = g.iter().map(|x| x / e1n).collect();
    let c = dot(&mg, &e1);
    let mut e2: Vec<f64> = mg.iter().zip(&e1).map(|(x, y)| x - c * y).collect();
    let e2n = dot(&e2, &e2).sqrt();
    let basis: Vec<Vec<f64>> = if e2n > 1e-12 * dot(&mg, &mg).sqrt() {
        e2.iter_mut().for_each(|x| *x /= e2n);
        vec![e1, e2]
    } else {
        vec![e1]
    };
    for _ in 0..2 {
        for e in &basis {
            let c = dot(&a, e);
            a.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
        }
    }
    a
}

/// Verifies the creation/annihilation relations of the shift operators on
/// the constrained subspace and the integer eigenvalue ladder they generate.
pub fn ladder_check(
    p: f64,
    n: usize,
    m_max: usize,
    seed: u64,
) -> Result<LadderReport, LinearizedError> {
    if !(p.is_finite() && (0.0..1.0).contains(&p)) {
        return Err(LinearizedError::InvalidP(p));
    }
    if n < 4 || m_max + 2 > n {
        return Err(LinearizedError::TruncationTooSmall {
            needed: (m_max + 2).max(4),
            got: n,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let support = n / 2;
    let mut creation: f64 = 0.0;
    let mut annihilation: f64 = 0.0;
    for _ in 0..PROBES {
        let a = constrained_probe(p, support, &mut rng);
        let mut sa = vec![0.0; support + 1];
        sa[1..].copy_from_slice(&a);
        let s_star_a: Vec<f64> = a[1..].to_vec();
        let (mut diff_c, mut norm_c, mut diff_a, mut norm_a) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for row in 0..n {
            let lhs = shifted_row(p, &sa, row, 0.0);
            let rhs = if row == 0 {
                0.0
            } else {
                shifted_row(p, &a, row - 1, -1.0)
            };
            diff_c = diff_c.max((lhs - rhs).abs());
            norm_c = norm_c.max(lhs.abs());
            let lhs = shifted_row(p, &s_star_a, row, 0.0);
            let rhs = shifted_row(p, &a, row + 1, 1.0);
            diff_a = diff_a.max((lhs - rhs).abs());
            norm_a = norm_a.max(lhs.abs());
        }
        creation = creation.max(diff_c / norm_c.max(1e-300));
        annihilation = annihilation.max(diff_a / norm_a.max(1e-300));
    }

    let v1 = first_ladder_vector(p, n + 1);
    let lowered = DVector::from_column_slice(&v1[1..]);
    let target = DVector::from_vec(ground_derivative(p, n)) * (1.0 - p * p);
    let lowering_residual = (&lowered - &target).norm() / target.norm();
    let cos = (lowered.dot(&target) / (lowered.norm() * target.norm())).clamp(-1.0, 1.0);
    // Small angles lose precision through acos; use the sine form.
    let lowering_angle = (1.0 - cos * cos).max(0.0).sqrt().asin();

    let t2m = DMatrix::from_fn(n, n, |i, j| {
        2.0 * toeplitz_entry(p, i, j) - if i == j { (i + 1) as f64 } else { 0.0 }
    });
    let ops = build_ground_ops(p, n)?;
    let mut eigen_residuals = Vec::with_capacity(m_max);
    let mut operator_residuals = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let mut v = DVector::zeros(n);
        for k in (m - 1)..n {
            v[k] = v1[k + 1 - m];
        }
        let lam = m as f64;
        let vn = v.norm();
        eigen_residuals.push((m, (&t2m * &v + lam * &v).norm() / vn));
        operator_residuals.push((
            m,
            (&ops.l_plus * &v + lam * &v).norm() / vn,
            (&ops.l_minus * &v + lam * &v).norm() / vn,
        ));
    }
    Ok(LadderReport {
        p,
        truncation: n,
        creation_residual: creation,
        annihilation_residual: annihilation,
        lowering_residual,
        lowering_angle,
        eigen_residuals,
        operator_residuals,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MuLadderEntry {
    pub m: usize,
    pub mu: f64,
    /// `alpha_j` in `v = M^m A - sum_{j<m} alpha_j M^j A`.
    pub coefficients: Vec<f64>,
    /// `||T v - mu M v|| / ||M v||`.
    pub eigen_residual: f64,
    /// `max_j |<M^j A, M v>| / (||M^j A|| ||M v||)`, `j < m`.
    pub weighted_orthogonality: f64,
    /// `max_j |<M^j A, v>| / (||M^j A|| ||v||)`, `j < m`; not expected to vanish.
    pub plain_orthogonality: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MuLadderReport {
    pub p: f64,
    pub truncation: usize,
    pub entries: Vec<MuLadderEntry>,
}

/// Bernoulli numbers with `B_1 = +1/2`.
fn bernoulli_plus(count: usize) -> Vec<f64> {
    let mut b = vec![0.0; count.max(1)];
    b[0] = 1.0;
    for n in 1..count {
        let mut acc = 0.0;
        for (k, bk) in b.iter().enumerate().take(n) {
            acc += binomial(n + 1, k) * bk;
        }
        b[n] = -acc / (n + 1) as f64;
    }
    if count > 1 {
        b[1] = 0.5;
    }
    b
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `sigma_q = sum_{k>=0} (k+1)^q p^{2k}`.
fn weighted_power_sum(p: f64, q: usize) -> f64 {
    let r = p * p;
    let mut acc = crate::summation::NeumaierSum::new();
    let mut pw = 1.0;
    let mut k = 0usize;
    loop {
        let term = ((k + 1) as f64).powi(q as i32) * pw;
        acc.add(term);
        if k > q && term < 1e-20 * acc.value() {
            break;
        }
        k += 1;
        pw *= r;
        if pw == 0.0 {
            break;
        }
    }
    acc.value()
}

/// Coefficients `beta_j`, `0 <= j <= m+1`, of `T M^m A = sum_j beta_j M^j A`.
fn power_coefficients(p: f64, m: usize, bern: &[f64]) -> Vec<f64> {
    let mut beta = vec![0.0; m + 2];
    // Faulhaber: sum_{k=1}^{x} k^m = 1/(m+1) sum_i C(m+1, i) B_i x^{m+1-i}.
    for i in 0..=m {
        beta[m + 1 - i] += binomial(m + 1, i) * bern[i] / (m + 1) as f64;
    }
    for r in 1..=m {
        beta[r] += p * p * binomial(m, r) * weighted_power_sum(p, m - r);
    }
    beta
}

/// Eigenvectors of `T v = mu M v` built from powers of `M` applied to `A`,
/// with `mu_m = 1/(m+1)`.
///
/// The coefficients follow from matching powers of `M` in
/// `T M^m A = sum_j beta_j M^j A`, a triangular system solved from the top.
/// At `p = 0` all powers `M^j A` coincide, so `p` must be positive.
pub fn mu_ladder(p: f64, m_max: usize, n: usize) -> Result<MuLadderReport, LinearizedError> {
    if !(p.is_finite() && p > 0.0 && p < 1.0) {
        return Err(LinearizedError::InvalidP(p));
    }
    if n == 0 {
        return Err(LinearizedError::EmptyTruncation);
    }
    let bern = bernoulli_plus(m_max + 2);
    let betas: Vec<Vec<f64>> = (0..=m_max)
        .map(|m| power_coefficients(p, m, &bern))
        .collect();
    let a = DVector::from_vec(ground_amplitudes(p, n));
    let weight = DVector::from_fn(n, |k, _| (k + 1) as f64);
    let mut powers = vec![a.clone()];
    for j in 1..=m_max + 1 {
        powers.push(powers[j - 1].component_mul(&weight));
    }
    let t = DMatrix::from_fn(n, n, |i, j| toeplitz_entry(p, i, j));

    let mut entries = Vec::with_capacity(m_max + 1);
    for m in 0..=m_max {
        let mu = 1.0 / (m + 1) as f64;
        let mut x = vec![0.0; m + 1];
        x[m] = 1.0;
        for i in (1..=m).rev() {
            let mut acc = 0.0;
            for (j, xj) in x.iter().enumerate().skip(i) {
                acc += xj * betas[j][i];
            }
            x[i - 1] = acc / (mu - betas[i - 1][i]);
        }
        let mut v = DVector::zeros(n);
        for (j, xj) in x.iter().enumerate() {
            v += *xj * &powers[j];
        }
        let mv = v.component_mul(&weight);
        let eigen_residual = (&t * &v - mu * &mv).norm() / mv.norm();
        let mut weighted_orth: f64 = 0.0;
        let mut plain_orth: f64 = 0.0;
        for pw in powers.iter().take(m) {
            weighted_orth = weighted_orth.max(pw.dot(&mv).abs() / (pw.norm() * mv.norm()));
            plain_orth = plain_orth.max(pw.dot(&v).abs() / (pw.norm() * v.norm()));
        }
        entries.push(MuLadderEntry {
            m,
            mu,
            coefficients: x[..m].iter().map(|c| -c).collect(),
            eigen_residual,
            weighted_orthogonality: weighted_orth,
            plain_orthogonality: plain_orth,
        });
    }
    Ok(MuLadderReport {
        p,
        truncation: n,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_vector_at_p_zero() {
        assert_eq!(first_ladder_vector(0.0, 5), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn ladder_relations() {
        for &p in &[0.0, 0.3, 0.6] {
            let rep = ladder_check(p, 128, 10, 7).unwrap();
            assert!(
                rep.creation_residual < 1e-12,
                "p={p} {}",
                rep.creation_residual
            );
            assert!(
                rep.annihilation_residual < 1e-12,
                "p={p} {}",
                rep.annihilation_residual
            );
            assert!(rep.lowering_residual < 1e-13);
            assert!(rep.lowering_angle < 1e-9);
            assert!(rep.max_eigen_residual() < 1e-9, "p={p}");
            for &(m, rp, rm) in &rep.operator_residuals {
                assert!(rp < 1e-9 && rm < 1e-9, "p={p} m={m}");
            }
        }
    }

    #[test]
    fn bernoulli_values() {
        let b = bernoulli_plus(7);
        let expect = [1.0, 0.5, 1.0 / 6.0, 0.0, -1.0 / 30.0, 0.0, 1.0 / 42.0];
        for (x, y) in b.iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn mu_ladder_low_orders() {
        for &p in &[0.3, 0.5, 0.7] {
            let n = 160;
            let rep = mu_ladder(p, 6, n).unwrap();
            let k = (1.0 + p * p) / (1.0 - p * p);
            assert!(rep.entries[0].coefficients.is_empty());
            assert!((rep.entries[1].coefficients[0] - k).abs() < 1e-13);
            let c2 = &rep.entries[2].coefficients;
            let q = (1.0 + p * p + p.powi(4)) / (1.0 - p * p).powi(2);
            assert!((c2[1] - 3.0 * k).abs() < 1e-12, "p={p} {c2:?}");
            assert!((c2[0] + 2.0 * q).abs() < 1e-12, "p={p} {c2:?}");
            for e in &rep.entries {
                assert!(
                    e.eigen_residual < 1e-10,
                    "p={p} m={} {}",
                    e.m,
                    e.eigen_residual
                );
                assert!(e.weighted_orthogonality < 1e-10, "p={p} m={}", e.m);
            }
        }
    }
}
