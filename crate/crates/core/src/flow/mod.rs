//! The conformal-flow vector field and its time integration.
//!
//! The evolution is `i (n+1) d alpha_n/dt = sum_j sum_k S conj(alpha_j) alpha_k
//! alpha_{n+j-k}`, i.e. `d alpha/dt = -i F(alpha)`.

mod integrator;
mod trajectory;

pub use integrator::{
    integrate, integrate_linearized, Dopri54, FlowError, IntegratorConfig, LinearizedTrajectory,
    StepStats,
};
pub use trajectory::TrajectoryRecord;

use num_complex::Complex64;

use crate::kernel::{base_row, min_plus_one, PairSumRow};
use crate::linearized::OperatorPair;

/// Cubic-cost reference evaluation of `F`.
pub fn vector_field_naive(alpha: &[Complex64]) -> Vec<Complex64> {
    let len = alpha.len();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (n, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..len {
            let s = n + j;
            let k_lo = s.saturating_sub(len - 1);
            let k_hi = s.min(len - 1);
            let mut inner = Complex64::new(0.0, 0.0);
            for k in k_lo..=k_hi {
                let m = s - k;
                inner += min_plus_one(n, j, k, m) as f64 * alpha[k] * alpha[m];
            }
            acc += alpha[j].conj() * inner;
        }
        *slot = acc / (n + 1) as f64;
    }
    out
}

/// Quadratic-cost evaluation of `F` through the layered pair sums.
///
/// Writes `(n+1) F_n = sum_{l<=n} G_l(n)` with
/// `G_l(n) = sum_{j>=l} conj(alpha_j) C_l(n+j)` and advances
/// `G_{l+1}(n) = G_l(n) - conj(alpha_l) C_l(n+l) - 2 alpha_l P_{l+1}(n-l)`,
/// where `P_m(d) = sum_{j>=m} conj(alpha_j) alpha_{j+d}` is itself peeled one
/// term per layer.
pub fn vector_field_fast(alpha: &[Complex64]) -> Vec<Complex64> {
    let len = alpha.len();
    let zero = Complex64::new(0.0, 0.0);
    if len == 0 {
        return Vec::new();
    }
    let c0 = base_row(alpha);
    let mut g = vec![zero; len];
    for (n, gn) in g.iter_mut().enumerate() {
        let mut acc = zero;
        for j in 0..len {
            if let Some(cv) = c0.get(n + j) {
                acc += alpha[j].conj() * cv;
            }
        }
        *gn = acc;
    }
    let mut p = vec![zero; len];
    for (d, pd) in p.iter_mut().enumerate() {
        let mut acc = zero;
        for j in 0..(len - d) {
            acc += alpha[j].conj() * alpha[j + d];
        }
        *pd = acc;
    }

    let mut acc = vec![zero; len];
    let mut row = PairSumRow::new(alpha);
    for l in 0..len {
        for n in l..len {
            acc[n] += g[n];
        }
        if l + 1 == len {
            break;
        }
        let al = alpha[l];
        let al_bar = al.conj();
        for d in 0..(len - l) {
            p[d] -= al_bar * alpha[l + d];
        }
        for n in (l + 1)..len {
            g[n] -= al_bar * row.get(n + l) + 2.0 * al * p[n - l];
        }
        row.advance();
    }
    for (n, v) in acc.iter_mut().enumerate() {
        *v /= (n + 1) as f64;
    }
    acc
}

/// `(M^{-1} L_- b, -M^{-1} L_+ a)`: the linearized evolution about a standing
/// wave, in the rotating frame.
pub fn linearized_rhs(a: &[f64], b: &[f64], ops: &OperatorPair) -> (Vec<f64>, Vec<f64>) {
    let lb = ops.apply_minus(b);
    let la = ops.apply_plus(a);
    let da = lb
        .iter()
        .enumerate()
        .map(|(n, x)| x / (n + 1) as f64)
        .collect();
    let db = la
        .iter()
        .enumerate()
        .map(|(n, x)| -x / (n + 1) as f64)
        .collect();
    (da, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{gauge_apply, ground_state, truncation_for, ModeVector, WeightedNormOrder};
    use crate::weighted_norm;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn h1_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
        let diff: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        weighted_norm(&diff, WeightedNormOrder::ONE)
            / weighted_norm(b, WeightedNormOrder::ONE).max(1e-300)
    }

    #[test]
    fn delta_and_zero() {
        let mut d = vec![c(0.0, 0.0); 9];
        d[0] = c(1.0, 0.0);
        assert_eq!(vector_field_naive(&d), d);
        assert_eq!(vector_field_fast(&d), d);
        let z = vec![c(0.0, 0.0); 5];
        assert_eq!(vector_field_fast(&z), z);
        assert_eq!(vector_field_naive(&z), z);
    }

    #[test]
    fn ground_state_is_stationary() {
        for &p in &[0.2, 0.5, 0.7] {
            let n = truncation_for(p, 1e-15, 16);
            let a = ground_state(p, n).unwrap();
            let f = vector_field_fast(&a);
            // Truncation only perturbs the tail entries; compare the bulk.
            let half = n / 2;
            assert!(h1_rel(&f[..half], &a[..half]) < 1e-10, "p={p}");
            assert!(h1_rel(&vector_field_naive(&a)[..half], &a[..half]) < 1e-10);
        }
    }

    #[test]
    fn hamiltonian_cross_check() {
        let a: Vec<Complex64> = (0..20)
            .map(|n| Complex64::from_polar(1.0 / (1.0 + n as f64), 0.7 * n as f64))
            .collect();
        let f = vector_field_fast(&a);
        let h: Complex64 = a
            .iter()
            .zip(&f)
            .enumerate()
            .map(|(n, (x, y))| (n + 1) as f64 * x.conj() * y)
            .sum();
        let e = crate::observables::energy_fast(&a);
        assert!((h.re - e).abs() < 1e-13 * e && h.im.abs() < 1e-13 * e);
    }

    fn disc_vector(max: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((0.0f64..1.0, 0.0f64..std::f64::consts::TAU), 1..=max).prop_map(|v| {
            v.into_iter()
                .map(|(r, phi)| Complex64::from_polar(r.sqrt(), phi))
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn fast_matches_naive(a in disc_vector(48)) {
            let fast = vector_field_fast(&a);
            let naive = vector_field_naive(&a);
            prop_assert!(h1_rel(&fast, &naive) <= 1e-12);
        }

        #[test]
        fn gauge_equivariance(a in disc_vector(24), theta in -3.0f64..3.0, mu in -3.0f64..3.0) {
            let mv = ModeVector::new(a).unwrap();
            let lhs = vector_field_fast(&gauge_apply(&mv, theta, mu));
            let rhs = gauge_apply(&ModeVector::new(vector_field_fast(&mv)).unwrap(), theta, mu);
            prop_assert!(h1_rel(&lhs, &rhs) <= 1e-13);
        }
    }
}
