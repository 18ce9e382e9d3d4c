//! Dense Cholesky factorization with explicit failure reporting.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    ///
    /// A pivot at or below `n · ε_mach · max|A_ii|` is treated as a failure and
    /// reported with its (zero-based) leading-minor index.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Numeric(format!(
                "cholesky of non-square {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let tol = n as f64 * f64::EPSILON * scale;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > tol) {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    /// Factorizes `a`; on failure retries once with `jitter` added to the
    /// diagonal.
    pub fn with_jitter(a: &DMatrix<f64>, jitter: f64) -> Result<(Self, bool)> {
        match Self::new(a) {
            Ok(c) => Ok((c, false)),
            Err(first) => {
                let mut b = a.clone();
                for i in 0..b.nrows() {
                    b[(i, i)] += jitter;
                }
                match Self::new(&b) {
                    Ok(c) => Ok((c, true)),
                    Err(_) => Err(first),
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                s += self.l[(i, k)] * zk;
            }
            *o = s;
        }
        out
    }

    /// `Lᵀ g`.
    pub fn mul_upper(&self, g: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (i, gi) in g.iter().enumerate().skip(k) {
                s += self.l[(i, k)] * gi;
            }
            *o = s;
        }
        out
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `bᵀ A⁻¹ b`.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        self.solve_lower(b).iter().map(|v| v * v).sum()
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            inv.set_column(j, &DVector::from_vec(col));
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0])
    }

    #[test]
    fn reconstructs() {
        let a = spd3();
        let c = Cholesky::new(&a).unwrap();
        let back = c.l() * c.l().transpose();
        assert!((back - &a).abs().max() < 1e-12);
    }

    #[test]
    fn solve_and_logdet_match_nalgebra() {
        let a = spd3();
        let c = Cholesky::new(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = c.solve(&b);
        let reference = a.clone().lu().solve(&DVector::from_row_slice(&b)).unwrap();
        for i in 0..3 {
            assert!((x[i] - reference[i]).abs() < 1e-12);
        }
        assert!((c.log_det() - a.determinant().ln()).abs() < 1e-12);
        let q: f64 = b.iter().zip(&x).map(|(u, v)| u * v).sum();
        assert!((c.quad_form(&b) - q).abs() < 1e-12);
        let i3 = c.inverse() * &a;
        assert!((i3 - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn rank_deficient_rejected_with_index() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match Cholesky::new(&a) {
            Err(Error::NotPositiveDefinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tiny_scale_accepted() {
        let a = DMatrix::<f64>::identity(3, 3) * 1e-20;
        assert!(Cholesky::new(&a).is_ok());
    }

    #[test]
    fn jitter_rescues_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, used) = Cholesky::with_jitter(&a, 1e-10).unwrap();
        assert!(used);
    }

    #[test]
    fn triangular_products() {
        let c = Cholesky::new(&spd3()).unwrap();
        let z = [0.3, -1.0, 2.0];
        let lz = c.mul_lower(&z);
        let back = c.solve_lower(&lz);
        for i in 0..3 {
            assert!((back[i] - z[i]).abs() < 1e-12);
        }
        let ltz = c.mul_upper(&z);
        let back = c.solve_upper(&ltz);
        for i in 0..3 {
            assert!((back[i] - z[i]).abs() < 1e-12);
        }
    }
}
