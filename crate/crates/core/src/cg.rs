//! Conjugate gradient for symmetric positive (semi-)definite operators given
//! only as matrix-vector products.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    /// Iterations actually performed.
    pub iterations: usize,
    /// `‖g - Hx_k‖` for `k = 0..=iterations` (starting from `x_0 = 0`).
    pub residual_norms: Vec<f64>,
    /// Stopped because `pᵀHp ≤ 0` (the operator has no curvature along `p`).
    pub breakdown: bool,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Approximately solves `Hx = g` with at most `n_iter` iterations, stopping
/// early once the residual norm drops below `residual_tol`.
pub fn conjugate_gradient<F>(
    mut hvp: F,
    g: &[f64],
    n_iter: usize,
    residual_tol: f64,
) -> Result<CgResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = g.len();
    let mut x = vec![0.0; n];
    let mut r = g.to_vec();
    let mut p = g.to_vec();
    let mut rr = dot(&r, &r);
    let mut residual_norms = vec![rr.sqrt()];
    let mut iterations = 0;
    let mut breakdown = false;
    if !rr.is_finite() {
        return Err(Error::CgNonFinite { iteration: 0 });
    }
    for it in 1..=n_iter {
        if rr.sqrt() < residual_tol {
            break;
        }
        let hp = hvp(&p)?;
        let php = dot(&p, &hp);
        if !php.is_finite() {
            return Err(Error::CgNonFinite { iteration: it });
        }
        if php <= 0.0 {
            breakdown = true;
            break;
        }
        let alpha = rr / php;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        let rr_new = dot(&r, &r);
        if !rr_new.is_finite() || !alpha.is_finite() {
            return Err(Error::CgNonFinite { iteration: it });
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        residual_norms.push(rr.sqrt());
        iterations = it;
    }
    Ok(CgResult {
        x,
        iterations,
        residual_norms,
        breakdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(m: &[Vec<f64>]) -> impl FnMut(&[f64]) -> Result<Vec<f64>> + '_ {
        move |v: &[f64]| Ok(m.iter().map(|row| dot(row, v)).collect())
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let g = [0.3, -1.2, 4.0];
        let res = conjugate_gradient(|v: &[f64]| Ok(v.to_vec()), &g, 10, 1e-12).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.x, g.to_vec());
    }

    #[test]
    fn diagonal_system() {
        let m = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 4.0],
        ];
        let res = conjugate_gradient(dense(&m), &[1.0, 1.0, 1.0], 3, 0.0).unwrap();
        for (x, e) in res.x.iter().zip([1.0, 0.5, 0.25]) {
            assert!((x - e).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let res = conjugate_gradient(|v: &[f64]| Ok(v.to_vec()), &[0.0; 4], 10, 1e-10).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_curvature_reports_breakdown() {
        let res = conjugate_gradient(|v: &[f64]| Ok(vec![0.0; v.len()]), &[1.0, 2.0], 5, 0.0).unwrap();
        assert!(res.breakdown);
        assert!(res.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nan_operator_names_iteration() {
        let mut calls = 0;
        let err = conjugate_gradient(
            |v: &[f64]| {
                calls += 1;
                if calls == 2 {
                    Ok(vec![f64::NAN; v.len()])
                } else {
                    Ok(v.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).collect())
                }
            },
            &[1.0, 1.0, 1.0],
            10,
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::CgNonFinite { iteration: 2 }));
    }
}
