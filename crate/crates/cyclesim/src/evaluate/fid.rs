//! Frechet distance between Gaussian feature statistics.
//!
//! `d^2 = ||m - m_w||^2 + Tr(C + C_w - 2 (C C_w)^{1/2})`, with the matrix
//! square root taken through the symmetrized product
//! `sqrt(C)^T C_w sqrt(C)` and eigenvalues clamped at the -1e-6 tolerance.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use super::EvalError;

/// Clamp tolerance for slightly negative eigenvalues / distances.
const NEG_TOL: f64 = 1e-6;

/// Mean and covariance of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_row_iterator(r, c, a.iter().cloned())
}

fn check_symmetric(a: &Array2<f64>) -> Result<(), EvalError> {
    let (r, c) = a.dim();
    if r != c {
        return Err(EvalError::DimensionMismatch(r, c));
    }
    let scale = 1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..r {
        for j in (i + 1)..c {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-8 * scale {
                return Err(EvalError::NotSymmetric);
            }
        }
    }
    Ok(())
}

/// Principal square root of a PSD matrix via symmetric eigendecomposition.
/// Eigenvalues below `-NEG_TOL * scale` are rejected; small negatives clamp
/// to zero.
fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, EvalError> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = 1.0 + eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -NEG_TOL * scale {
            return Err(EvalError::NotPsd(format!("eigenvalue {v}")));
        }
        *v = v.max(0.0).sqrt();
    }
    let d = DMatrix::from_diagonal(&roots);
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Squared Frechet distance between two Gaussian fits.
pub fn fid(stats_real: &GaussianStats, stats_gen: &GaussianStats) -> Result<f64, EvalError> {
    if stats_real.dim() != stats_gen.dim() {
        return Err(EvalError::DimensionMismatch(
            stats_real.dim(),
            stats_gen.dim(),
        ));
    }
    check_symmetric(&stats_real.cov)?;
    check_symmetric(&stats_gen.cov)?;

    let mean_term: f64 = stats_real
        .mean
        .iter()
        .zip(stats_gen.mean.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    let c1 = to_dmatrix(&stats_real.cov);
    let c2 = to_dmatrix(&stats_gen.cov);
    let root_c1 = sqrtm_psd(&c1)?;
    let inner = &root_c1 * &c2 * &root_c1;
    // Symmetrize against round-off before the second decomposition.
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = SymmetricEigen::new(inner);
    let scale = 1.0 + eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut tr_sqrt = 0.0;
    for v in eig.eigenvalues.iter() {
        if *v < -NEG_TOL * scale {
            return Err(EvalError::NotPsd(format!("product eigenvalue {v}")));
        }
        tr_sqrt += v.max(0.0).sqrt();
    }

    let trace_term = c1.trace() + c2.trace() - 2.0 * tr_sqrt;
    let total = mean_term + trace_term;
    if total < -NEG_TOL {
        return Err(EvalError::NotPsd(format!("negative distance {total}")));
    }
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn scalar_stats(m: f64, var: f64) -> GaussianStats {
        GaussianStats {
            mean: arr1(&[m]),
            cov: arr2(&[[var]]),
        }
    }

    #[test]
    fn identical_stats_give_zero() {
        let s = GaussianStats {
            mean: arr1(&[0.3, -1.0, 2.0]),
            cov: arr2(&[[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]]),
        };
        let d = fid(&s, &s).unwrap();
        assert!(d <= 1e-6, "fid(S,S) = {d}");
    }

    #[test]
    fn scalar_closed_forms() {
        // d=1: ||m-mw||^2 + (sigma - sigma_w)^2.
        let d = fid(&scalar_stats(0.0, 1.0), &scalar_stats(3.0, 1.0)).unwrap();
        assert!((d - 9.0).abs() < 1e-9);
        let d2 = fid(&scalar_stats(0.0, 1.0), &scalar_stats(0.0, 4.0)).unwrap();
        assert!((d2 - 1.0).abs() < 1e-9, "(1-2)^2 = 1, got {d2}");
    }

    #[test]
    fn commuting_case_matches_closed_form() {
        // C = Q D1 Q^T and Cw = Q D2 Q^T share eigenvectors, so
        // Tr((C Cw)^{1/2}) = sum(sqrt(d1 d2)) and the trace term is
        // sum((sqrt(d1) - sqrt(d2))^2).
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for d in 2..=8usize {
            // Random orthogonal Q from Gram-Schmidt on a random matrix.
            let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let q = raw.qr().q();
            let d1: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
            let d2: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
            let mk = |diag: &[f64]| {
                let dm = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(diag));
                let m = &q * dm * q.transpose();
                Array2::from_shape_fn((d, d), |(i, j)| 0.5 * (m[(i, j)] + m[(j, i)]))
            };
            let s1 = GaussianStats {
                mean: Array1::zeros(d),
                cov: mk(&d1),
            };
            let s2 = GaussianStats {
                mean: Array1::from_shape_fn(d, |i| i as f64 * 0.1),
                cov: mk(&d2),
            };
            let got = fid(&s1, &s2).unwrap();
            let mean_term: f64 = (0..d).map(|i| (i as f64 * 0.1).powi(2)).sum();
            let trace_term: f64 = d1
                .iter()
                .zip(&d2)
                .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
                .sum();
            let want = mean_term + trace_term;
            assert!(
                (got - want).abs() < 1e-5,
                "d={d}: got {got}, want {want}"
            );
        }
    }

    /// Denman-Beavers iteration, an independent route to sqrt(C1 C2).
    fn trace_sqrt_denman_beavers(c1: &DMatrix<f64>, c2: &DMatrix<f64>) -> f64 {
        let mut y = c1 * c2;
        let n = y.nrows();
        let mut z = DMatrix::<f64>::identity(n, n);
        for _ in 0..100 {
            let y_inv = y.clone().try_inverse().expect("invertible iterate");
            let z_inv = z.clone().try_inverse().expect("invertible iterate");
            let y_next = (&y + &z_inv) * 0.5;
            let z_next = (&z + &y_inv) * 0.5;
            let delta = (&y_next - &y).norm();
            y = y_next;
            z = z_next;
            if delta < 1e-13 {
                break;
            }
        }
        y.trace()
    }

    #[test]
    fn general_psd_case_matches_denman_beavers() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for d in 2..=6usize {
            let mut mk = || {
                let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                // A A^T + eps I is strictly PD.
                &raw * raw.transpose() + DMatrix::identity(d, d) * 0.05
            };
            let c1 = mk();
            let c2 = mk();
            let s1 = GaussianStats {
                mean: Array1::zeros(d),
                cov: Array2::from_shape_fn((d, d), |(i, j)| c1[(i, j)]),
            };
            let s2 = GaussianStats {
                mean: Array1::zeros(d),
                cov: Array2::from_shape_fn((d, d), |(i, j)| c2[(i, j)]),
            };
            let got = fid(&s1, &s2).unwrap();
            let want = c1.trace() + c2.trace() - 2.0 * trace_sqrt_denman_beavers(&c1, &c2);
            assert!(
                (got - want).abs() < 1e-6,
                "d={d}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn fid_is_symmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let d = 4;
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let raw = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
                let sym = raw.dot(&raw.t()) + Array2::<f64>::eye(d) * 0.1;
                GaussianStats {
                    mean: Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0)),
                    cov: sym,
                }
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let ab = fid(&a, &b).unwrap();
            let ba = fid(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-6, "{ab} vs {ba}");
            assert!(ab >= 0.0);
        }
    }

    #[test]
    fn errors_on_bad_inputs() {
        let a = scalar_stats(0.0, 1.0);
        let b = GaussianStats {
            mean: arr1(&[0.0, 0.0]),
            cov: Array2::eye(2),
        };
        assert!(matches!(fid(&a, &b), Err(EvalError::DimensionMismatch(1, 2))));

        let asym = GaussianStats {
            mean: arr1(&[0.0, 0.0]),
            cov: arr2(&[[1.0, 0.5], [0.0, 1.0]]),
        };
        assert!(matches!(fid(&asym, &b), Err(EvalError::NotSymmetric)));

        let indef = GaussianStats {
            mean: arr1(&[0.0, 0.0]),
            cov: arr2(&[[1.0, 0.0], [0.0, -1.0]]),
        };
        assert!(matches!(fid(&indef, &b), Err(EvalError::NotPsd(_))));
    }
}
