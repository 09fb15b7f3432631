use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::LinearizedError;
use crate::state::{ground_amplitudes, ReferenceState};

/// Truncations of `p^N` above this trigger a warning when building ground
/// operators.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Dense truncations of `L_+`, `L_-` and the diagonal weight `M = diag(n+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPair {
    pub l_plus: DMatrix<f64>,
    pub l_minus: DMatrix<f64>,
    pub about: ReferenceState,
}

impl OperatorPair {
    pub fn truncation(&self) -> usize {
        self.l_plus.nrows()
    }

    /// `M_nn = n + 1`.
    pub fn weight(&self) -> Vec<f64> {
        (0..self.truncation()).map(|n| (n + 1) as f64).collect()
    }

    pub fn apply_plus(&self, a: &[f64]) -> Vec<f64> {
        apply(&self.l_plus, a)
    }

    pub fn apply_minus(&self, b: &[f64]) -> Vec<f64> {
        apply(&self.l_minus, b)
    }

    /// `M^{-1} L`, formed by row scaling.
    pub fn weighted(&self, which: Which) -> DMatrix<f64> {
        let mut m = self.get(which).clone();
        for (n, mut row) in m.row_iter_mut().enumerate() {
            row /= (n + 1) as f64;
        }
        m
    }

    pub fn get(&self, which: Which) -> &DMatrix<f64> {
        match which {
            Which::Plus => &self.l_plus,
            Which::Minus => &self.l_minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Plus,
    Minus,
}

fn apply(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), v.len(), "operator/vector truncation mismatch");
    (m * DVector::from_column_slice(v)).data.into()
}

/// `T_nj = p^{|n-j|} - p^{n+j+2}`.
#[inline]
pub fn toeplitz_entry(p: f64, n: usize, j: usize) -> f64 {
    p.powi(n.abs_diff(j) as i32) - p.powi((n + j + 2) as i32)
}

/// Ground-state operators
/// `[L_±]_nj = 2T_nj ± (1-p^2)^2 (n+1)(j+1) p^{n+j} - (n+1) delta_nj`.
///
/// Assembled from the Toeplitz part `2 p^{|n-j|}`, the rank-one correction
/// `-2 p^2 p^n p^j` and the rank-one term `±(1-p^2)^2 (n+1) p^n (j+1) p^j`,
/// filling the upper triangle and mirroring so both are exactly symmetric.
pub fn build_ground_ops(p: f64, n: usize) -> Result<OperatorPair, LinearizedError> {
    if !(p.is_finite() && (0.0..1.0).contains(&p)) {
        return Err(LinearizedError::InvalidP(p));
    }
    if n == 0 {
        return Err(LinearizedError::EmptyTruncation);
    }
    if p.powi(n as i32) > TAIL_TOLERANCE {
        log::warn!(
            "truncation N = {n} leaves tail p^N = {:.3e} above {TAIL_TOLERANCE:e} at p = {p}",
            p.powi(n as i32)
        );
    }
    let powers: Vec<f64> = (0..2 * n + 2).map(|k| p.powi(k as i32)).collect();
    let q2 = (1.0 - p * p).powi(2);
    let mut lp = DMatrix::zeros(n, n);
    let mut lm = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let toeplitz = 2.0 * powers[j - i];
            let rank_two = 2.0 * powers[2] * powers[i] * powers[j];
            let rank_mass = q2 * ((i + 1) * (j + 1)) as f64 * powers[i] * powers[j];
            let diag = if i == j { (i + 1) as f64 } else { 0.0 };
            let base = toeplitz - rank_two - diag;
            lp[(i, j)] = base + rank_mass;
            lm[(i, j)] = base - rank_mass;
            lp[(j, i)] = lp[(i, j)];
            lm[(j, i)] = lm[(i, j)];
        }
    }
    Ok(OperatorPair {
        l_plus: lp,
        l_minus: lm,
        about: ReferenceState::ground(p).map_err(|_| LinearizedError::InvalidP(p))?,
    })
}

/// Single-mode operators about `c e_mode` (frequency `c^2`):
/// diagonal `c^2 (2 min(n, N) + 1 - n)` and reflected coupling
/// `± c^2 (min(n, N, 2N - n) + 1)` between `n` and `2N - n`, `n <= 2N`.
pub fn build_single_mode_ops(
    mode: usize,
    c: f64,
    n: usize,
) -> Result<OperatorPair, LinearizedError> {
    if n <= 2 * mode {
        return Err(LinearizedError::TruncationTooSmall {
            needed: 2 * mode + 1,
            got: n,
        });
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(LinearizedError::InvalidAmplitude(c));
    }
    let c2 = c * c;
    let mut lp = DMatrix::zeros(n, n);
    let mut lm = DMatrix::zeros(n, n);
    for i in 0..n {
        let d = (2 * i.min(mode) + 1) as f64 - i as f64;
        lp[(i, i)] += c2 * d;
        lm[(i, i)] += c2 * d;
        if i <= 2 * mode {
            let r = 2 * mode - i;
            let w = c2 * (i.min(mode).min(r) + 1) as f64;
            lp[(i, r)] += w;
            lm[(i, r)] -= w;
        }
    }
    Ok(OperatorPair {
        l_plus: lp,
        l_minus: lm,
        about: ReferenceState::single_mode(mode, Complex64::new(c, 0.0)),
    })
}

/// `A(p)` as a real vector (convenience for operator checks).
pub(crate) fn ground_vec(p: f64, n: usize) -> DVector<f64> {
    DVector::from_vec(ground_amplitudes(p, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{ground_derivative, truncation_for};

    fn weighted(v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            v.iter().enumerate().map(|(n, x)| (n + 1) as f64 * x),
        )
    }

    fn h1(v: &DVector<f64>) -> f64 {
        v.iter()
            .enumerate()
            .map(|(n, x)| ((n + 1) as f64 * x).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn p_zero_is_diagonal() {
        let ops = build_ground_ops(0.0, 6).unwrap();
        let lp = [2.0, 0.0, -1.0, -2.0, -3.0, -4.0];
        let lm = [0.0, 0.0, -1.0, -2.0, -3.0, -4.0];
        for i in 0..6 {
            for j in 0..6 {
                let (ep, em) = if i == j { (lp[i], lm[i]) } else { (0.0, 0.0) };
                assert_eq!(ops.l_plus[(i, j)], ep);
                assert_eq!(ops.l_minus[(i, j)], em);
            }
        }
        assert_eq!(build_single_mode_ops(0, 1.0, 6).unwrap().l_plus, ops.l_plus);
        assert_eq!(
            build_single_mode_ops(0, 1.0, 6).unwrap().l_minus,
            ops.l_minus
        );
    }

    #[test]
    fn ground_corner_entry() {
        let ops = build_ground_ops(0.5, 8).unwrap();
        // 2 - 2 p^2 + (1 - p^2)^2 - 1
        assert!((ops.l_plus[(0, 0)] - 1.0625).abs() < 1e-15);
        assert!((ops.l_minus[(0, 0)] - (2.0 - 0.5 - 0.5625 - 1.0)).abs() < 1e-15);
        assert_eq!(ops.l_plus.transpose(), ops.l_plus);
        assert_eq!(ops.l_minus.transpose(), ops.l_minus);
    }

    #[test]
    fn ground_operator_identities() {
        for &p in &[0.0, 0.3, 0.6, 0.8] {
            let n = truncation_for(p, 1e-18, 32).max(2 * truncation_for(p, 1e-12, 32));
            let ops = build_ground_ops(p, n).unwrap();
            let a = ground_vec(p, n);
            let ma = weighted(&a);
            let da = DVector::from_vec(ground_derivative(p, n));
            let lam = 2.0 * (1.0 + p * p) / (1.0 - p * p);
            let tol = 1e-9;
            assert!(h1(&(&ops.l_minus * &a)) < tol);
            assert!(h1(&(&ops.l_minus * &ma)) < tol);
            assert!(h1(&(&ops.l_plus * &da)) < tol, "p={p}");
            assert!(h1(&(&ops.l_plus * &a - 2.0 * &ma)) < tol);
            assert!(h1(&(&ops.l_plus * &ma - lam * &ma)) < tol);
        }
    }

    #[test]
    fn single_mode_block() {
        let ops = build_single_mode_ops(1, 1.0, 8).unwrap();
        assert_eq!(ops.l_plus[(1, 1)], 4.0);
        assert_eq!(ops.l_minus[(1, 1)], 0.0);
        assert_eq!(ops.l_plus[(0, 2)], 1.0);
        assert_eq!(ops.l_minus[(0, 2)], -1.0);
        assert_eq!(ops.l_plus[(3, 3)], 0.0);
        assert_eq!(ops.l_plus[(4, 4)], -1.0);
        assert_eq!(ops.l_plus.transpose(), ops.l_plus);
        let scaled = build_single_mode_ops(1, 2.0, 8).unwrap();
        assert_eq!(scaled.l_plus, 4.0 * ops.l_plus);
        assert!(build_single_mode_ops(2, 1.0, 4).is_err());
        assert!(build_ground_ops(1.0, 8).is_err());
    }
}
