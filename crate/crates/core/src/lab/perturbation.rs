use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::LabError;
use crate::state::{weighted_norm, ModeVector, WeightedNormOrder};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationSpec {
    /// Modes carrying random entries; clipped to the truncation.
    pub support: Range<usize>,
    /// Exact `h^1` norm of the result.
    pub delta: f64,
    /// Force the mode-0 entry to vanish.
    pub zero_mode0: bool,
}

impl PerturbationSpec {
    pub fn new(support: usize, delta: f64) -> Self {
        Self {
            support: 0..support,
            delta,
            zero_mode0: false,
        }
    }
}

/// RNG for ensemble member `stream` of `seed`.
pub(crate) fn member_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Point uniformly distributed in the closed unit disc.
pub(crate) fn unit_disc(rng: &mut ChaCha20Rng) -> Complex64 {
    let r = rng.random::<f64>().sqrt();
    Complex64::from_polar(r, 2.0 * PI * rng.random::<f64>())
}

/// Entries i.i.d. uniform in the unit disc on the support, rescaled to
/// `h^1` norm `delta`. Deterministic in `(seed, stream)`.
pub fn generate_perturbation(
    spec: &PerturbationSpec,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<ModeVector, LabError> {
    if !(spec.delta.is_finite() && spec.delta >= 0.0) {
        return Err(LabError::Validation(format!(
            "delta must be nonnegative, got {}",
            spec.delta
        )));
    }
    let lo = spec.support.start.min(n);
    let hi = spec.support.end.min(n);
    let first = if spec.zero_mode0 { lo.max(1) } else { lo };
    if first >= hi {
        return Err(LabError::Validation(format!(
            "perturbation support {:?} is empty within truncation {n}",
            spec.support
        )));
    }
    let mut rng = member_rng(seed, stream);
    let mut v = vec![Complex64::default(); n];
    for z in &mut v[first..hi] {
        *z = unit_disc(&mut rng);
    }
    let norm = weighted_norm(&v, WeightedNormOrder::ONE);
    if norm == 0.0 || spec.delta == 0.0 {
        return Ok(ModeVector::zeros(n));
    }
    let s = spec.delta / norm;
    v.iter_mut().for_each(|z| *z *= s);
    Ok(ModeVector::new(v)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_normalized() {
        let spec = PerturbationSpec::new(16, 1e-3);
        let a = generate_perturbation(&spec, 40, 7, 3).unwrap();
        let b = generate_perturbation(&spec, 40, 7, 3).unwrap();
        let c = generate_perturbation(&spec, 40, 7, 4).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_ne!(a.to_csv(), c.to_csv());
        let norm = weighted_norm(&a, WeightedNormOrder::ONE);
        assert!((norm / 1e-3 - 1.0).abs() <= 1e-14);
        assert!(a[16..].iter().all(|z| *z == Complex64::default()));
    }

    #[test]
    fn zero_mode_suppressed() {
        let spec = PerturbationSpec {
            zero_mode0: true,
            ..PerturbationSpec::new(8, 0.5)
        };
        let a = generate_perturbation(&spec, 12, 1, 0).unwrap();
        assert_eq!(a[0], Complex64::default());
        assert!((weighted_norm(&a, WeightedNormOrder::ONE) / 0.5 - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn zero_delta_and_bad_support() {
        let a = generate_perturbation(&PerturbationSpec::new(8, 0.0), 12, 1, 0).unwrap();
        assert!(a.iter().all(|z| *z == Complex64::default()));
        let spec = PerturbationSpec {
            support: 20..30,
            delta: 1.0,
            zero_mode0: false,
        };
        assert!(generate_perturbation(&spec, 12, 1, 0).is_err());
    }
}
