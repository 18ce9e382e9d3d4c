use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::geometry::Point;
use crate::linalg::Cholesky;

/// Power covariance `σ² exp(−(d/l)^p)` between the given points.
pub fn power_covariance(points: &[Point], sigma: f64, l: f64, p: f64) -> DMatrix<f64> {
    let n = points.len();
    let s2 = sigma * sigma;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            s2
        } else {
            s2 * (-(points[i].distance(&points[j]) / l).powf(p)).exp()
        }
    })
}

/// Zero-mean Gaussian vector with covariance `cov`.
pub fn sample_gaussian_vector<R: Rng + ?Sized>(
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let chol = Cholesky::new(cov)?;
    Ok(sample_with_factor(&chol, rng))
}

/// `L z` for standard normal `z`.
pub fn sample_with_factor<R: Rng + ?Sized>(chol: &Cholesky, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..chol.dim())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    chol.mul_lower(&z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::rng::seeded;

    #[test]
    fn identity_covariance() {
        let cov = DMatrix::<f64>::identity(3, 3);
        let mut rng = seeded(11);
        let chol = Cholesky::new(&cov).unwrap();
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for _ in 0..n {
            let v = sample_with_factor(&chol, &mut rng);
            for i in 0..3 {
                for j in 0..3 {
                    acc[(i, j)] += v[i] * v[j];
                }
            }
        }
        acc /= n as f64;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (acc[(i, j)] - target).abs() < 0.05,
                    "{i}{j}: {}",
                    acc[(i, j)]
                );
            }
        }
    }

    #[test]
    fn tiny_covariance_gives_tiny_draws() {
        let cov = DMatrix::<f64>::identity(4, 4) * 1e-20;
        let v = sample_gaussian_vector(&cov, &mut seeded(1)).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn rank_deficient_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            sample_gaussian_vector(&cov, &mut seeded(1)),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
    }
}
