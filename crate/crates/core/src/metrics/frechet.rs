//! Frechet distance between Gaussian fits of feature sets.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use super::MetricError;

/// Symmetric matrix square root via eigendecomposition. Eigenvalues below
/// `-tol` fail as non-PSD; small negatives within tolerance clip to zero.
fn sqrtm_psd(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>, MetricError> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -tol * scale {
            return Err(MetricError::NotPsd { eigenvalue: *v });
        }
        *v = v.max(0.0).sqrt();
    }
    let d = DMatrix::from_diagonal(&roots);
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// `||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2})`, computed through the
/// symmetric form `sqrt(S1) S2 sqrt(S1)`.
pub fn frechet_distance(
    mu1: &[f64],
    cov1: &Array2<f64>,
    mu2: &[f64],
    cov2: &Array2<f64>,
) -> Result<f64, MetricError> {
    let d = mu1.len();
    if mu2.len() != d || cov1.shape() != [d, d] || cov2.shape() != [d, d] {
        return Err(MetricError::DimMismatch);
    }
    let tol = 1e-10;
    let c1 = DMatrix::from_row_slice(d, d, cov1.as_slice().unwrap());
    let c2 = DMatrix::from_row_slice(d, d, cov2.as_slice().unwrap());
    let a = sqrtm_psd(&c1, tol)?;
    let inner = &a * &c2 * &a;
    let root = sqrtm_psd(&inner, tol)?;
    let dm = DVector::from_row_slice(mu1) - DVector::from_row_slice(mu2);
    let dist = dm.norm_squared() + c1.trace() + c2.trace() - 2.0 * root.trace();
    // tiny negative residue from finite precision
    Ok(dist.max(0.0))
}

/// Mean and unbiased covariance of row-features `[N, D]`. Needs `N >= 2`.
pub fn gaussian_moments(features: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>), MetricError> {
    let (n, d) = features.dim();
    if n < 2 {
        return Err(MetricError::TooFewSamples { got: n });
    }
    let mean: Vec<f64> = (0..d).map(|j| features.column(j).sum() / n as f64).collect();
    let mut cov = Array2::<f64>::zeros((d, d));
    for row in features.rows() {
        let c: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            for j in 0..d {
                cov[[i, j]] += c[i] * c[j];
            }
        }
    }
    cov.mapv_inplace(|v| v / (n - 1) as f64);
    Ok((mean, cov))
}

/// Frechet distance between the Gaussian fits of two feature sets.
pub fn frechet_of_features(real: &Array2<f64>, gen: &Array2<f64>) -> Result<f64, MetricError> {
    if real.ncols() != gen.ncols() {
        return Err(MetricError::DimMismatch);
    }
    let (mu_r, cov_r) = gaussian_moments(real)?;
    let (mu_g, cov_g) = gaussian_moments(gen)?;
    frechet_distance(&mu_r, &cov_r, &mu_g, &cov_g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn identical_moments_give_zero() {
        let mu = vec![0.4, -1.0, 2.0];
        let cov = arr2(&[[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]]).into_dyn();
        let cov = cov.into_dimensionality().unwrap();
        let d = frechet_distance(&mu, &cov, &mu, &cov).unwrap();
        assert!(d.abs() < 1e-6, "got {d}");
    }

    #[test]
    fn unit_covariances_reduce_to_mean_distance() {
        let eye = Array2::<f64>::eye(2);
        let d = frechet_distance(&[0.0, 0.0], &eye, &[3.0, 4.0], &eye).unwrap();
        assert!((d - 25.0).abs() < 1e-6, "got {d}");
    }

    #[test]
    fn commuting_diagonal_case() {
        for dim in [2usize, 5, 8] {
            let c1 = Array2::<f64>::eye(dim) * 4.0;
            let c2 = Array2::<f64>::eye(dim);
            let mu = vec![0.0; dim];
            // per-dim: 4 + 1 - 2*sqrt(4) = 1
            let d = frechet_distance(&mu, &c1, &mu, &c2).unwrap();
            assert!((d - dim as f64).abs() < 1e-6, "dim {dim}: got {d}");
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let c1 = arr2(&[[2.0, 0.5], [0.5, 1.5]]);
        let c2 = arr2(&[[1.0, -0.2], [-0.2, 0.8]]);
        let a = frechet_distance(&[0.0, 1.0], &c1, &[2.0, -1.0], &c2).unwrap();
        let b = frechet_distance(&[2.0, -1.0], &c2, &[0.0, 1.0], &c1).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn non_psd_rejected() {
        let bad = arr2(&[[1.0, 0.0], [0.0, -0.5]]);
        let eye = Array2::<f64>::eye(2);
        assert!(matches!(
            frechet_distance(&[0.0, 0.0], &bad, &[0.0, 0.0], &eye),
            Err(MetricError::NotPsd { .. })
        ));
    }

    #[test]
    fn moments_need_two_samples() {
        let one = Array2::<f64>::zeros((1, 3));
        assert!(matches!(gaussian_moments(&one), Err(MetricError::TooFewSamples { .. })));
    }
}
