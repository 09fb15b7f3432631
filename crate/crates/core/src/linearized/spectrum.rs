use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::Serialize;

use super::ops::{OperatorPair, Which};
use super::LinearizedError;
use crate::state::{fmt_f64, ground_amplitudes, ground_derivative, ReferenceKind, ReferenceState};

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Relative threshold `|lambda| <= ZERO_TOL * ||L||` for zero modes.
pub const ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub which: Which,
    pub about: ReferenceState,
    pub truncation: usize,
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    /// `||L v - lambda v||` per pair (unit `v`).
    pub residuals: Vec<f64>,
    pub zero_count: usize,
    /// Spectral norm of the truncated operator.
    pub norm: f64,
    #[serde(skip)]
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(*r))
    }

    /// `(positive, zero, negative)` counts at the zero-mode tolerance.
    pub fn signature(&self) -> (usize, usize, usize) {
        let tol = ZERO_TOL * self.norm.max(1.0);
        let pos = self.eigenvalues.iter().filter(|&&x| x > tol).count();
        let neg = self.eigenvalues.iter().filter(|&&x| x < -tol).count();
        (pos, self.eigenvalues.len() - pos - neg, neg)
    }

    /// One row per eigenpair: index, eigenvalue, residual, dominant mode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,eigenvalue,residual,dominant_mode\n");
        for (k, (l, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            let col = self.eigenvectors.column(k);
            let dominant = col.iamax();
            let _ = writeln!(out, "{k},{},{},{dominant}", fmt_f64(*l), fmt_f64(*r));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Full symmetric eigendecomposition of `L_+` or `L_-`.
pub fn spectrum(ops: &OperatorPair, which: Which) -> Result<SpectralReport, LinearizedError> {
    let l = ops.get(which);
    let (values, vectors) = sorted_symmetric_eigen(l)?;
    let norm = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut residuals = Vec::with_capacity(values.len());
    for (k, &lam) in values.iter().enumerate() {
        let v = vectors.column(k);
        residuals.push((l * v - lam * v).norm());
    }
    let tol = ZERO_TOL * norm.max(1.0);
    let report = SpectralReport {
        which,
        about: ops.about,
        truncation: ops.truncation(),
        zero_count: values.iter().filter(|x| x.abs() <= tol).count(),
        eigenvalues: values,
        residuals,
        norm,
        eigenvectors: vectors,
    };
    if report.max_residual() > 1e-10 * norm.max(1.0) {
        return Err(LinearizedError::NoConvergence(format!(
            "eigenpair residual {:e} exceeds 1e-10 ||L|| = {:e}",
            report.max_residual(),
            1e-10 * norm
        )));
    }
    Ok(report)
}

pub(crate) fn sorted_symmetric_eigen(
    l: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>), LinearizedError> {
    let eig = SymmetricEigen::try_new(l.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(|| {
        let fro = l.norm();
        LinearizedError::NoConvergence(format!(
            "symmetric eigensolver did not converge (dimension {}, Frobenius norm {fro:e})",
            l.nrows()
        ))
    })?;
    let mut order: Vec<usize> = (0..l.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(l.nrows(), l.nrows(), |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroModeAnalysis {
    /// Dimension of the kernel of the block operator `[[0, L_-], [-L_+, 0]]`.
    pub geometric_multiplicity: usize,
    /// Number of independent kernel vectors `v` for which `L x = M v` is solvable.
    pub jordan_partners: usize,
    /// True when every Jordan chain found stops after one generalized vector.
    pub chains_have_length_two: bool,
    pub algebraic_multiplicity: usize,
    /// Singular values of the block operator at or below the threshold.
    pub kernel_singular_values: Vec<f64>,
    /// Smallest singular value above the threshold (spectral gap witness).
    pub first_nonzero_singular_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub about: ReferenceState,
    pub truncation: usize,
    /// Nonzero frequencies `Omega`, ascending, from the eigenvalues
    /// `Omega^2` of `M^{-1} L_- M^{-1} L_+`.
    pub omegas: Vec<f64>,
    /// Eigenvalues of the composed map treated as zero.
    pub zero_count: usize,
    pub zero_modes: ZeroModeAnalysis,
    /// Eigenvalues `Omega^2` with negative real part or a significant
    /// imaginary part (as `(re, im)`).
    pub unstable: Vec<(f64, f64)>,
    /// Residual `||L (-A/2, 0) - M (0, A)||` for ground states.
    pub generalized_vector_residual: Option<f64>,
}

impl StabilityReport {
    pub fn is_spectrally_stable(&self) -> bool {
        self.unstable.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,omega,omega_squared\n");
        for (k, w) in self.omegas.iter().enumerate() {
            let _ = writeln!(out, "{k},{},{}", fmt_f64(*w), fmt_f64(w * w));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Frequencies of the linearized problem `L_- a = Lambda M b`,
/// `L_+ b = -Lambda M a`, plus the zero-mode structure.
pub fn stability_spectrum(ops: &OperatorPair) -> Result<StabilityReport, LinearizedError> {
    let n = ops.truncation();
    let p_mat = ops.weighted(Which::Minus) * ops.weighted(Which::Plus);
    let scale = p_mat.norm().max(1.0);
    let eig = p_mat.complex_eigenvalues();
    let tol = ZERO_TOL * scale;
    let mut omegas = Vec::new();
    let mut unstable = Vec::new();
    let mut zero_count = 0;
    for z in eig.iter() {
        if z.norm() <= tol {
            zero_count += 1;
            continue;
        }
        if z.re < -tol || z.im.abs() > 1e-8 * z.norm().max(1.0) {
            unstable.push((z.re, z.im));
            continue;
        }
        omegas.push(z.re.sqrt());
    }
    omegas.sort_by(f64::total_cmp);
    if !unstable.is_empty() {
        log::warn!(
            "{} eigenvalues of the stability map leave the imaginary axis",
            unstable.len()
        );
    }

    let zero_modes = zero_mode_analysis(ops)?;
    let generalized_vector_residual = match ops.about.kind {
        ReferenceKind::Ground { p, .. } => {
            // The upper block L_- 0 vanishes identically.
            let a = DVector::from_vec(ground_amplitudes(p, n));
            let bottom = -(&ops.l_plus * (-0.5 * &a));
            let ma =
                DVector::from_iterator(n, a.iter().enumerate().map(|(k, x)| (k + 1) as f64 * x));
            Some((bottom - ma).norm())
        }
        ReferenceKind::SingleMode { .. } => None,
    };

    Ok(StabilityReport {
        about: ops.about,
        truncation: n,
        omegas,
        zero_count,
        zero_modes,
        unstable,
        generalized_vector_residual,
    })
}

fn block_operator(ops: &OperatorPair) -> DMatrix<f64> {
    let n = ops.truncation();
    let mut l = DMatrix::zeros(2 * n, 2 * n);
    l.view_mut((0, n), (n, n)).copy_from(&ops.l_minus);
    l.view_mut((n, 0), (n, n)).copy_from(&(-&ops.l_plus));
    l
}

/// Kernel dimension and Jordan structure of the zero eigenvalue of
/// `M^{-1} L` with `L = [[0, L_-], [-L_+, 0]]`, `M = diag(M, M)`.
///
/// Kernel vectors and left null vectors come from one SVD. A kernel vector
/// `v` has a partner `x` with `L x = M v` iff `M v` is orthogonal to every
/// left null vector, so the partner count is `dim ker - rank(G)` with
/// `G_ij = <w_i, M v_j>`.
pub fn zero_mode_analysis(ops: &OperatorPair) -> Result<ZeroModeAnalysis, LinearizedError> {
    let n = ops.truncation();
    let l = block_operator(ops);
    let svd = SVD::try_new(l.clone(), true, true, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| LinearizedError::NoConvergence("SVD of block operator".into()))?;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;
    let norm = sv.iter().fold(0.0f64, |m, x| m.max(*x));
    let thresh = ZERO_TOL * norm.max(1.0);
    let kernel_idx: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] <= thresh).collect();
    let first_nonzero = sv
        .iter()
        .filter(|&&x| x > thresh)
        .fold(f64::INFINITY, |m, x| m.min(*x));
    let dim = kernel_idx.len();
    let weight = |v: DVector<f64>| {
        DVector::from_iterator(
            2 * n,
            v.iter().enumerate().map(|(k, x)| ((k % n) + 1) as f64 * x),
        )
    };
    let kernel: Vec<DVector<f64>> = kernel_idx.iter().map(|&k| vt.row(k).transpose()).collect();
    let left: Vec<DVector<f64>> = kernel_idx
        .iter()
        .map(|&k| u.column(k).into_owned())
        .collect();
    if dim == 0 {
        return Ok(ZeroModeAnalysis {
            geometric_multiplicity: 0,
            jordan_partners: 0,
            chains_have_length_two: true,
            algebraic_multiplicity: 0,
            kernel_singular_values: Vec::new(),
            first_nonzero_singular_value: first_nonzero,
        });
    }
    let mv: Vec<DVector<f64>> = kernel.iter().map(|v| weight(v.clone())).collect();
    let g = DMatrix::from_fn(dim, dim, |i, j| left[i].dot(&mv[j]));
    let g_svd = SVD::new(g.clone(), true, true);
    let g_tol = 1e-8 * (n as f64);
    let rank = g_svd.singular_values.iter().filter(|&&s| s > g_tol).count();
    let partners = dim - rank;

    // Each null combination c of G gives a solvable L x = M (V c); check that
    // no second generalized vector exists: M x + M k must stay out of range
    // for every kernel vector k.
    let g_vt = g_svd.v_t.as_ref().expect("requested V^T");
    let mut chains_two = true;
    for r in rank..dim {
        let coeffs = g_vt.row(r).transpose();
        let mut target = DVector::zeros(2 * n);
        for (j, c) in coeffs.iter().enumerate() {
            target += *c * &mv[j];
        }
        let x = svd
            .solve(&target, thresh)
            .map_err(|e| LinearizedError::NoConvergence(e.to_string()))?;
        let mx = weight(x);
        let rhs = DVector::from_iterator(dim, left.iter().map(|w| -w.dot(&mx)));
        let fit = g_svd
            .solve(&rhs, g_tol)
            .map_err(|e| LinearizedError::NoConvergence(e.to_string()))?;
        let miss = (&g * fit - &rhs).norm();
        if miss <= g_tol {
            chains_two = false;
        }
    }
    Ok(ZeroModeAnalysis {
        geometric_multiplicity: dim,
        jordan_partners: partners,
        chains_have_length_two: chains_two,
        algebraic_multiplicity: dim + partners,
        kernel_singular_values: kernel_idx.iter().map(|&k| sv[k]).collect(),
        first_nonzero_singular_value: first_nonzero,
    })
}

/// Largest absolute entries of `[L_+, L_-]` and `[M^{-1} L_+, M^{-1} L_-]`
/// over the leading `inner x inner` block.
pub fn commutators(ops: &OperatorPair, inner: usize) -> Result<(f64, f64), LinearizedError> {
    let n = ops.truncation();
    if inner > n {
        return Err(LinearizedError::TruncationTooSmall {
            needed: inner,
            got: n,
        });
    }
    let max_block = |m: &DMatrix<f64>| {
        m.view((0, 0), (inner, inner))
            .iter()
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
    };
    let c1 = &ops.l_plus * &ops.l_minus - &ops.l_minus * &ops.l_plus;
    let wp = ops.weighted(Which::Plus);
    let wm = ops.weighted(Which::Minus);
    let c2 = &wp * &wm - &wm * &wp;
    Ok((max_block(&c1), max_block(&c2)))
}

/// Closed-form nonzero frequencies for the truncated single-mode problem,
/// ascending: `2(N-n)/(2N+1-n)` for `n < N` and `(n-2N-1)/(n+1)` for
/// `2N+2 <= n < truncation`.
pub fn single_mode_frequencies(mode: usize, truncation: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..mode)
        .map(|n| 2.0 * (mode - n) as f64 / (2 * mode + 1 - n) as f64)
        .collect();
    out.extend((2 * mode + 2..truncation).map(|n| (n - 2 * mode - 1) as f64 / (n + 1) as f64));
    out.sort_by(f64::total_cmp);
    out
}

/// `Omega_m = (m-1)/(m+1)`.
pub fn ground_frequency(m: usize) -> f64 {
    if m < 2 {
        0.0
    } else {
        (m - 1) as f64 / (m + 1) as f64
    }
}

/// `lambda_*(p) = 2(1+p^2)/(1-p^2)`.
pub fn lambda_star(p: f64) -> f64 {
    2.0 * (1.0 + p * p) / (1.0 - p * p)
}

/// `A'(p)` as a real vector.
pub(crate) fn ground_derivative_vec(p: f64, n: usize) -> DVector<f64> {
    DVector::from_vec(ground_derivative(p, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearized::{build_ground_ops, build_single_mode_ops};

    #[test]
    fn ground_spectrum_p_half() {
        let ops = build_ground_ops(0.5, 96).unwrap();
        let plus = spectrum(&ops, Which::Plus).unwrap();
        assert!((plus.eigenvalues[0] - 10.0 / 3.0).abs() < 1e-9);
        assert!(plus.eigenvalues[1].abs() < 1e-9);
        for m in 1..=10 {
            assert!((plus.eigenvalues[m + 1] + m as f64).abs() < 1e-9);
        }
        let minus = spectrum(&ops, Which::Minus).unwrap();
        assert!(minus.eigenvalues[0].abs() < 1e-9 && minus.eigenvalues[1].abs() < 1e-9);
        assert_eq!(minus.zero_count, 2);
        // The L_- kernel is spanned by A and MA.
        let a = crate::linearized::ops::ground_vec(0.5, 96);
        let ma = DVector::from_iterator(96, a.iter().enumerate().map(|(k, x)| (k + 1) as f64 * x));
        let ker = minus.eigenvectors.columns(0, 2);
        for v in [a, ma] {
            let proj = &ker * (ker.transpose() * &v);
            assert!((proj - &v).norm() < 1e-9 * v.norm());
        }
        assert!(plus.to_csv().lines().count() == 97);
    }

    #[test]
    fn p_zero_spectra_are_diagonals() {
        let ops = build_ground_ops(0.0, 12).unwrap();
        let plus = spectrum(&ops, Which::Plus).unwrap();
        let expect: Vec<f64> = std::iter::once(2.0)
            .chain(std::iter::once(0.0))
            .chain((1..=10).map(|m| -(m as f64)))
            .collect();
        assert_eq!(plus.eigenvalues, expect);
    }

    #[test]
    fn ground_stability() {
        for &p in &[0.0, 0.4] {
            let ops = build_ground_ops(p, 96).unwrap();
            let rep = stability_spectrum(&ops).unwrap();
            assert!(rep.is_spectrally_stable());
            assert_eq!(rep.zero_count, 2, "p={p}");
            for m in 2..=10 {
                assert!(
                    (rep.omegas[m - 2] - ground_frequency(m)).abs() < 1e-8,
                    "p={p} m={m}"
                );
            }
            let z = &rep.zero_modes;
            assert_eq!(z.geometric_multiplicity, 3, "p={p}");
            assert_eq!(z.jordan_partners, 1, "p={p}");
            assert!(z.chains_have_length_two);
            assert_eq!(z.algebraic_multiplicity, 4);
            assert!(rep.generalized_vector_residual.unwrap() < 1e-10);
        }
    }

    #[test]
    fn single_mode_stability() {
        for mode in 0..=2 {
            let n = 24;
            let ops = build_single_mode_ops(mode, 1.0, n).unwrap();
            let rep = stability_spectrum(&ops).unwrap();
            let expect = single_mode_frequencies(mode, n);
            assert_eq!(rep.omegas.len(), expect.len(), "mode={mode}");
            for (a, b) in rep.omegas.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-10);
            }
            assert_eq!(rep.zero_count, mode + 2);
        }
        // Block frequency for the first excited mode is 2/3.
        assert_eq!(single_mode_frequencies(1, 3), vec![2.0 / 3.0]);
    }

    #[test]
    fn single_mode_signature() {
        for mode in 0..=3 {
            let ops = build_single_mode_ops(mode, 1.0, 2 * mode + 10).unwrap();
            let (pp, zp, _) = spectrum(&ops, Which::Plus).unwrap().signature();
            let (pm, zm, _) = spectrum(&ops, Which::Minus).unwrap().signature();
            assert_eq!(pp + pm, 2 * mode + 1, "mode={mode}");
            assert_eq!(zp + zm, 2 * mode + 3, "mode={mode}");
        }
    }

    #[test]
    fn commutators_vanish() {
        let ops = build_ground_ops(0.0, 10).unwrap();
        assert_eq!(commutators(&ops, 5).unwrap(), (0.0, 0.0));
        let ops = build_ground_ops(0.5, 96).unwrap();
        let (c1, c2) = commutators(&ops, 48).unwrap();
        assert!(c1 < 1e-8 && c2 < 1e-8, "{c1} {c2}");
    }
}
