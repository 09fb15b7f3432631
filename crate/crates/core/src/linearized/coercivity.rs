use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;

use super::ops::{OperatorPair, Which};
use super::spectrum::{ground_derivative_vec, sorted_symmetric_eigen};
use super::LinearizedError;
use crate::observables::functional_k;
use crate::state::{make_reference, ReferenceKind};

fn ground_p(ops: &OperatorPair) -> Result<f64, LinearizedError> {
    match ops.about.kind {
        ReferenceKind::Ground { p, .. } => Ok(p),
        ReferenceKind::SingleMode { .. } => Err(LinearizedError::NotGround),
    }
}

/// Largest `h^{1/2}`-normalized Rayleigh quotient of `L_+` and `L_-` on
/// `{a : <MA, a> = <MA', a> = 0}`; both are negative for ground states.
///
/// With `W = diag(n+1)` and `a = W^{-1/2} y`, the constraints become
/// `y ⊥ W^{-1/2} M A`, `y ⊥ W^{-1/2} M A'`, and the quotient is the top
/// eigenvalue of the compression of `W^{-1/2} L W^{-1/2}` to that complement.
pub fn coercivity(ops: &OperatorPair) -> Result<(f64, f64), LinearizedError> {
    let p = ground_p(ops)?;
    let n = ops.truncation();
    let a = super::ops::ground_vec(p, n);
    let da = ground_derivative_vec(p, n);
    let inv_sqrt_w = DVector::from_fn(n, |k, _| 1.0 / ((k + 1) as f64).sqrt());
    let m_times = |v: &DVector<f64>| DVector::from_fn(n, |k, _| (k + 1) as f64 * v[k]);
    let d1 = m_times(&a).component_mul(&inv_sqrt_w);
    let d2 = m_times(&da).component_mul(&inv_sqrt_w);
    let q = DMatrix::from_columns(&[d1, d2]).qr().q();

    let constrained_max = |which: Which| -> Result<f64, LinearizedError> {
        let l = ops.get(which);
        let k = DMatrix::from_fn(n, n, |i, j| inv_sqrt_w[i] * l[(i, j)] * inv_sqrt_w[j]);
        let proj = DMatrix::identity(n, n) - &q * q.transpose();
        let compressed = &proj * k * &proj;
        // Push the constraint directions far below the rest of the spectrum.
        let shift = compressed.norm() * 10.0 + 1.0;
        let shifted = compressed - shift * (&q * q.transpose());
        let (values, _) = sorted_symmetric_eigen(&shifted)?;
        Ok(values[0])
    };
    Ok((
        constrained_max(Which::Plus)?,
        constrained_max(Which::Minus)?,
    ))
}

/// `<L_+^{-1} M A, M A>` using the pseudo-inverse on the range of `L_+`.
pub fn inverse_mass_pairing(ops: &OperatorPair) -> Result<f64, LinearizedError> {
    let p = ground_p(ops)?;
    let n = ops.truncation();
    let a = super::ops::ground_vec(p, n);
    let ma = DVector::from_fn(n, |k, _| (k + 1) as f64 * a[k]);
    let svd = SVD::new(ops.l_plus.clone(), true, true);
    let tol = super::spectrum::ZERO_TOL * svd.singular_values.max();
    let x = svd
        .solve(&ma, tol)
        .map_err(|e| LinearizedError::NoConvergence(e.to_string()))?;
    Ok(x.dot(&ma))
}

/// `K(A + a + ib) - K(A) - <L_+ a, a> - <L_- b, b>` at the reference state.
pub fn hessian_residual(ops: &OperatorPair, a: &[f64], b: &[f64]) -> Result<f64, LinearizedError> {
    let n = ops.truncation();
    if a.len() != n || b.len() != n {
        return Err(LinearizedError::DimensionMismatch {
            got: a.len().max(b.len()),
            expected: n,
        });
    }
    let reference = make_reference(ops.about.kind, n).map_err(|_| LinearizedError::NotGround)?;
    let lambda = ops.about.lambda;
    let base = &reference.state;
    let perturbed: Vec<Complex64> = base
        .iter()
        .zip(a.iter().zip(b))
        .map(|(z, (x, y))| z + Complex64::new(*x, *y))
        .collect();
    let quad = |l: &DMatrix<f64>, v: &[f64]| {
        let v = DVector::from_column_slice(v);
        v.dot(&(l * &v))
    };
    Ok(functional_k(&perturbed, lambda)
        - functional_k(base, lambda)
        - quad(&ops.l_plus, a)
        - quad(&ops.l_minus, b))
}
