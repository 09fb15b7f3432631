//! Mode vectors, weighted norms, symmetry actions and closed-form
//! stationary states.

use std::fmt::Write as _;
use std::ops::{Deref, DerefMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("mode vector must have at least one mode")]
    Empty,
    #[error("non-finite amplitude at mode {index}")]
    NonFinite { index: usize },
    #[error("ground-state parameter p = {0} outside [0, 1)")]
    InvalidP(f64),
    #[error("single mode {mode} does not fit in truncation {truncation}")]
    ModeOutsideTruncation { mode: usize, truncation: usize },
    #[error("weighted-norm order must be a finite s >= 0, got {0}")]
    InvalidOrder(f64),
    #[error("scaling factor must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Finite truncation of the amplitude sequence; `alpha_n = 0` for `n >= N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector(Vec<Complex64>);

impl ModeVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self, StateError> {
        if amplitudes.is_empty() {
            return Err(StateError::Empty);
        }
        if let Some(index) = amplitudes
            .iter()
            .position(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(StateError::NonFinite { index });
        }
        Ok(Self(amplitudes))
    }

    /// # Panics
    /// If `n == 0`.
    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "truncation must be positive");
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_real(values: &[f64]) -> Result<Self, StateError> {
        Self::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Kronecker delta `c * e_mode` in truncation `n`.
    pub fn delta(n: usize, mode: usize, c: Complex64) -> Result<Self, StateError> {
        if mode >= n {
            return Err(StateError::ModeOutsideTruncation {
                mode,
                truncation: n,
            });
        }
        let mut v = Self::zeros(n);
        v.0[mode] = c;
        Ok(v)
    }

    pub fn truncation(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.re).collect()
    }

    pub fn imag_parts(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.im).collect()
    }

    /// `self - other`, padding the shorter vector with zeros.
    pub fn difference(&self, other: &ModeVector) -> ModeVector {
        let n = self.len().max(other.len());
        let zero = Complex64::new(0.0, 0.0);
        ModeVector(
            (0..n)
                .map(|k| {
                    self.0.get(k).copied().unwrap_or(zero) - other.0.get(k).copied().unwrap_or(zero)
                })
                .collect(),
        )
    }

    /// CSV with header `n,re,im`; values use 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,re,im\n");
        for (n, z) in self.0.iter().enumerate() {
            let _ = writeln!(out, "{n},{},{}", fmt_f64(z.re), fmt_f64(z.im));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, StateError> {
        let mut amps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('n')) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(StateError::Parse(format!(
                    "line {}: expected 3 columns, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let n: usize = fields[0]
                .parse()
                .map_err(|e| StateError::Parse(format!("line {}: {e}", lineno + 1)))?;
            if n != amps.len() {
                return Err(StateError::Parse(format!(
                    "line {}: mode index {n} out of sequence",
                    lineno + 1
                )));
            }
            let re = parse_f64(fields[1], lineno)?;
            let im = parse_f64(fields[2], lineno)?;
            amps.push(Complex64::new(re, im));
        }
        Self::new(amps)
    }

    /// JSON array of `[re, im]` pairs with 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut out = String::from("[");
        for (k, z) in self.0.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "[{},{}]", fmt_f64(z.re), fmt_f64(z.im));
        }
        out.push(']');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, StateError> {
        let pairs: Vec<[f64; 2]> =
            serde_json::from_str(text).map_err(|e| StateError::Parse(e.to_string()))?;
        Self::new(
            pairs
                .into_iter()
                .map(|[re, im]| Complex64::new(re, im))
                .collect(),
        )
    }
}

impl Deref for ModeVector {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl DerefMut for ModeVector {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

/// Decimal with 17 significant digits: round-trips every finite `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, lineno: usize) -> Result<f64, StateError> {
    s.parse()
        .map_err(|e| StateError::Parse(format!("line {}: {e}", lineno + 1)))
}

/// Sobolev-type weight exponent `s >= 0` for `sum (n+1)^{2s} |alpha_n|^2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct WeightedNormOrder(f64);

impl WeightedNormOrder {
    pub const L2: Self = Self(0.0);
    pub const HALF: Self = Self(0.5);
    pub const ONE: Self = Self(1.0);

    pub fn new(s: f64) -> Result<Self, StateError> {
        if s.is_finite() && s >= 0.0 {
            Ok(Self(s))
        } else {
            Err(StateError::InvalidOrder(s))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `(n+1)^{2s}`.
    #[inline]
    pub fn weight(self, n: usize) -> f64 {
        let base = (n + 1) as f64;
        if self.0 == 0.0 {
            1.0
        } else if self.0 == 0.5 {
            base
        } else if self.0 == 1.0 {
            base * base
        } else {
            base.powf(2.0 * self.0)
        }
    }
}

pub fn weighted_norm_squared(alpha: &[Complex64], s: WeightedNormOrder) -> f64 {
    crate::summation::sum_for_size(
        alpha.len(),
        alpha
            .iter()
            .enumerate()
            .map(|(n, z)| s.weight(n) * z.norm_sqr()),
    )
}

pub fn weighted_norm(alpha: &[Complex64], s: WeightedNormOrder) -> f64 {
    weighted_norm_squared(alpha, s).sqrt()
}

/// `alpha_n -> e^{i theta + i n mu} alpha_n` (global and local phase shifts).
pub fn gauge_apply(alpha: &ModeVector, theta: f64, mu: f64) -> ModeVector {
    ModeVector(
        alpha
            .iter()
            .enumerate()
            .map(|(n, z)| z * Complex64::from_polar(1.0, theta + mu * n as f64))
            .collect(),
    )
}

/// `alpha -> c alpha`. The accompanying time dilation `t -> c^2 t` is left to
/// the caller.
pub fn scaling_apply(alpha: &ModeVector, c: f64) -> Result<ModeVector, StateError> {
    if !(c.is_finite() && c > 0.0) {
        return Err(StateError::InvalidScale(c));
    }
    Ok(ModeVector(alpha.iter().map(|z| z * c).collect()))
}

fn check_p(p: f64) -> Result<(), StateError> {
    if p.is_finite() && (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(StateError::InvalidP(p))
    }
}

/// Normalized ground state `A_n(p) = (1 - p^2) p^n`, `n < len`.
pub fn ground_amplitudes(p: f64, len: usize) -> Vec<f64> {
    let scale = 1.0 - p * p;
    (0..len).map(|n| scale * p.powi(n as i32)).collect()
}

/// `dA_n/dp = (1 - p^2) n p^{n-1} - 2 p^{n+1}`; regular at `p = 0`.
pub fn ground_derivative(p: f64, len: usize) -> Vec<f64> {
    let q = 1.0 - p * p;
    (0..len)
        .map(|n| {
            let lead = if n == 0 {
                0.0
            } else {
                q * n as f64 * p.powi(n as i32 - 1)
            };
            lead - 2.0 * p.powi(n as i32 + 1)
        })
        .collect()
}

/// `d^2 A_n/dp^2 = (1 - p^2) n (n-1) p^{n-2} - 2 (2n + 1) p^n`.
pub fn ground_second_derivative(p: f64, len: usize) -> Vec<f64> {
    let q = 1.0 - p * p;
    (0..len)
        .map(|n| {
            let lead = if n < 2 {
                0.0
            } else {
                q * (n * (n - 1)) as f64 * p.powi(n as i32 - 2)
            };
            lead - 2.0 * (2 * n + 1) as f64 * p.powi(n as i32)
        })
        .collect()
}

/// Geometric sequence `c p^n` for complex `c`, `p`.
pub fn geometric(c: Complex64, p: Complex64, len: usize) -> ModeVector {
    let mut out = Vec::with_capacity(len);
    let mut pw = Complex64::new(1.0, 0.0);
    for n in 0..len {
        if n > 0 {
            pw = p.powu(n as u32);
        }
        out.push(c * pw);
    }
    ModeVector(out)
}

/// Closed-form stationary states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReferenceKind {
    /// `c e_mode`, frequency `|c|^2`.
    SingleMode { mode: usize, c: Complex64 },
    /// `scale * A(p)`, frequency `|scale|^2`; `scale = 1` is the normalized
    /// ground state with `Q = H = 1`.
    Ground { p: f64, scale: Complex64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceState {
    pub kind: ReferenceKind,
    /// Standing-wave frequency: `alpha(t) = A e^{-i lambda t}`.
    pub lambda: f64,
}

impl ReferenceState {
    pub fn single_mode(mode: usize, c: Complex64) -> Self {
        Self {
            kind: ReferenceKind::SingleMode { mode, c },
            lambda: c.norm_sqr(),
        }
    }

    pub fn ground(p: f64) -> Result<Self, StateError> {
        Self::scaled_ground(p, Complex64::new(1.0, 0.0))
    }

    pub fn scaled_ground(p: f64, scale: Complex64) -> Result<Self, StateError> {
        check_p(p)?;
        Ok(Self {
            kind: ReferenceKind::Ground { p, scale },
            lambda: scale.norm_sqr(),
        })
    }
}

/// Truncated reference amplitudes plus the discarded `h^1` mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedReference {
    pub state: ModeVector,
    pub lambda: f64,
    /// `sum_{n >= N} (n+1)^2 |A_n|^2`, in closed form.
    pub tail_mass: f64,
}

/// `sum_{n >= N} (n+1)^2 q^n` for `0 <= q < 1`.
pub fn weighted_geometric_tail(q: f64, n: usize) -> f64 {
    if q == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let k = (n + 1) as f64;
    let r = 1.0 - q;
    q.powi(n as i32) * (k * k / r + 2.0 * k * q / (r * r) + q * (1.0 + q) / (r * r * r))
}

pub fn make_reference(kind: ReferenceKind, n: usize) -> Result<TruncatedReference, StateError> {
    if n == 0 {
        return Err(StateError::Empty);
    }
    match kind {
        ReferenceKind::SingleMode { mode, c } => {
            let state = ModeVector::delta(n, mode, c)?;
            Ok(TruncatedReference {
                state,
                lambda: c.norm_sqr(),
                tail_mass: 0.0,
            })
        }
        ReferenceKind::Ground { p, scale } => {
            check_p(p)?;
            let amps = ground_amplitudes(p, n);
            let state = ModeVector(amps.into_iter().map(|a| scale * a).collect());
            let q = p * p;
            let tail = scale.norm_sqr() * (1.0 - q) * (1.0 - q) * weighted_geometric_tail(q, n);
            Ok(TruncatedReference {
                state,
                lambda: scale.norm_sqr(),
                tail_mass: tail,
            })
        }
    }
}

/// Normalized ground state `A(p)` truncated to `n` modes.
pub fn ground_state(p: f64, n: usize) -> Result<ModeVector, StateError> {
    Ok(make_reference(
        ReferenceKind::Ground {
            p,
            scale: Complex64::new(1.0, 0.0),
        },
        n,
    )?
    .state)
}

/// Smallest truncation with `p^N < tol` (at least `min_n`).
pub fn truncation_for(p: f64, tol: f64, min_n: usize) -> usize {
    if p <= 0.0 {
        return min_n;
    }
    let n = (tol.ln() / p.ln()).ceil() as usize + 1;
    n.max(min_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn weighted_norm_examples() {
        let delta = ModeVector::delta(4, 0, c(1.0, 0.0)).unwrap();
        assert_eq!(weighted_norm(&delta, WeightedNormOrder::ONE), 1.0);

        let two = ModeVector::from_real(&[1.0, 1.0, 0.0]).unwrap();
        assert!((weighted_norm(&two, WeightedNormOrder::HALF) - 3f64.sqrt()).abs() < 1e-15);

        for &p in &[0.1, 0.5, 0.8] {
            let n = truncation_for(p, 1e-18, 16);
            let a = ground_state(p, n).unwrap();
            let expect = ((1.0 + p * p) / (1.0 - p * p)).sqrt();
            let got = weighted_norm(&a, WeightedNormOrder::ONE);
            assert!(
                (got - expect).abs() < 1e-13 * expect,
                "p={p}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn gauge_identity_and_delta() {
        let a = ModeVector::new(vec![c(0.3, -0.2), c(1.0, 0.5), c(-0.1, 0.0)]).unwrap();
        assert_eq!(gauge_apply(&a, 0.0, 0.0), a);
        let d = ModeVector::delta(3, 0, c(1.0, 0.0)).unwrap();
        let g = gauge_apply(&d, 0.7, 1.9);
        assert!((g[0] - Complex64::from_polar(1.0, 0.7)).norm() < 1e-16);
        assert_eq!(g[1], c(0.0, 0.0));
    }

    #[test]
    fn reference_examples() {
        assert_eq!(
            ground_state(0.0, 5).unwrap(),
            ModeVector::delta(5, 0, c(1.0, 0.0)).unwrap()
        );
        let a = ground_state(0.5, 5).unwrap();
        assert_eq!(a[2], c(0.1875, 0.0));

        let r = make_reference(
            ReferenceKind::SingleMode {
                mode: 3,
                c: c(2.0, 0.0),
            },
            6,
        )
        .unwrap();
        assert_eq!(r.state, ModeVector::delta(6, 3, c(2.0, 0.0)).unwrap());
        assert_eq!(r.lambda, 4.0);
        assert_eq!(ReferenceState::single_mode(3, c(2.0, 0.0)).lambda, 4.0);
    }

    #[test]
    fn reference_rejects_bad_p() {
        for p in [1.0, 1.5, -0.1, f64::NAN] {
            assert!(ReferenceState::ground(p).is_err());
            assert!(matches!(
                make_reference(
                    ReferenceKind::Ground {
                        p,
                        scale: c(1.0, 0.0)
                    },
                    8
                ),
                Err(StateError::InvalidP(_))
            ));
        }
        assert!(make_reference(
            ReferenceKind::SingleMode {
                mode: 8,
                c: c(1.0, 0.0)
            },
            8
        )
        .is_err());
    }

    #[test]
    fn tail_mass_matches_direct_sum() {
        for &p in &[0.0, 0.3, 0.7, 0.9] {
            for &n in &[1usize, 5, 20, 60] {
                let r = make_reference(
                    ReferenceKind::Ground {
                        p,
                        scale: c(1.0, 0.0),
                    },
                    n,
                )
                .unwrap();
                let amps = ground_amplitudes(p, n + 4000);
                let direct: f64 = amps
                    .iter()
                    .enumerate()
                    .skip(n)
                    .map(|(k, a)| ((k + 1) * (k + 1)) as f64 * a * a)
                    .sum();
                let tol = 1e-12 * direct.max(1e-300);
                assert!(
                    (r.tail_mass - direct).abs() <= tol,
                    "p={p} n={n}: {} vs {direct}",
                    r.tail_mass
                );
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &p in &[0.0, 0.2, 0.6] {
            let h = 1e-6;
            let d = ground_derivative(p, 12);
            let dd = ground_second_derivative(p, 12);
            let plus = ground_amplitudes(p + h, 12);
            let minus = ground_amplitudes((p - h).abs().max(0.0), 12);
            let dplus = ground_derivative(p + h, 12);
            let dminus = ground_derivative(p - h, 12);
            for n in 0..12 {
                if p > 0.0 {
                    let fd = (plus[n] - minus[n]) / (2.0 * h);
                    assert!((fd - d[n]).abs() < 1e-8, "n={n}");
                }
                let fd2 = (dplus[n] - dminus[n]) / (2.0 * h);
                assert!(
                    (fd2 - dd[n]).abs() < 1e-7,
                    "n={n} p={p}: {fd2} vs {}",
                    dd[n]
                );
            }
        }
        // p = 0: A'(0) = e_1.
        let d0 = ground_derivative(0.0, 4);
        assert_eq!(d0, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert_eq!(ModeVector::new(vec![]), Err(StateError::Empty));
        assert_eq!(
            ModeVector::new(vec![c(0.0, 0.0), c(f64::NAN, 0.0)]),
            Err(StateError::NonFinite { index: 1 })
        );
        assert!(scaling_apply(&ModeVector::zeros(2), 0.0).is_err());
        assert!(WeightedNormOrder::new(-1.0).is_err());
    }

    #[test]
    fn csv_and_json_round_trip_exact() {
        let a = ModeVector::new(vec![
            c(0.1, -1.0 / 3.0),
            c(std::f64::consts::PI, 1e-300),
            c(-0.0, 5e-324),
            c(1.7976931348623157e308, -2.2250738585072014e-308),
        ])
        .unwrap();
        let back = ModeVector::from_csv(&a.to_csv()).unwrap();
        let back_json = ModeVector::from_json(&a.to_json()).unwrap();
        for k in 0..a.len() {
            assert_eq!(a[k].re.to_bits(), back[k].re.to_bits());
            assert_eq!(a[k].im.to_bits(), back[k].im.to_bits());
            assert_eq!(a[k].re.to_bits(), back_json[k].re.to_bits());
            assert_eq!(a[k].im.to_bits(), back_json[k].im.to_bits());
        }
        assert!(a.to_csv().starts_with("n,re,im\n0,"));
    }

    #[test]
    fn csv_rejects_malformed() {
        assert!(ModeVector::from_csv("n,re,im\n0,1.0\n").is_err());
        assert!(ModeVector::from_csv("n,re,im\n1,1.0,0.0\n").is_err());
        assert!(ModeVector::from_json("[[1.0]]").is_err());
    }
}
