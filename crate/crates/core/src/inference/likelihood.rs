use crate::error::{invalid, Error, Result};
use crate::geometry::{LinearNetwork, NetLocation, Point, Tessellation};

/// Dual-mesh approximation of the Poisson log-likelihood.
///
/// With `w = β + λ₀ 1` the approximation reads
/// `Σ_j (P w)_j − Σ_i α_i exp(w_i)`, where row `j` of `P` holds the basis
/// weights at data point `j` and `α_i` is the dual cell measure of vertex `i`.
/// Only `Pᵀ 1` enters the value, so it is cached.
#[derive(Clone, Debug)]
pub struct LikelihoodWorkspace {
    dual: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    col_sums: Vec<f64>,
}

impl LikelihoodWorkspace {
    pub fn new(dual: Vec<f64>, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if let Some(a) = dual.iter().find(|a| !(**a > 0.0)) {
            return Err(invalid(format!("dual measure must be positive, got {a}")));
        }
        let mut col_sums = vec![0.0; dual.len()];
        for (j, row) in rows.iter().enumerate() {
            let mut total = 0.0;
            for &(i, w) in row {
                if i >= dual.len() {
                    return Err(invalid(format!("row {j} references vertex {i}")));
                }
                col_sums[i] += w;
                total += w;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("row {j} sums to {total}, not 1")));
            }
        }
        Ok(LikelihoodWorkspace {
            dual,
            rows,
            col_sums,
        })
    }

    pub fn planar(tess: &Tessellation, points: &[Point]) -> Result<Self> {
        let rows = points
            .iter()
            .map(|p| {
                Ok(tess
                    .eval_basis(p)?
                    .iter()
                    .filter(|(_, w)| *w != 0.0)
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(tess.dual_areas().to_vec(), rows)
    }

    /// Nodes of `net` carry half the length of every incident segment; a
    /// location interpolates linearly between its segment's end nodes.
    pub fn network(net: &LinearNetwork, locations: &[NetLocation]) -> Result<Self> {
        let mut dual = vec![0.0; net.n_nodes()];
        for s in net.segments() {
            dual[s.a] += 0.5 * s.length;
            dual[s.b] += 0.5 * s.length;
        }
        let rows = locations
            .iter()
            .map(|loc| {
                net.check_location(loc)?;
                let s = &net.segments()[loc.seg];
                let t = loc.offset / s.length;
                Ok(vec![(s.a, 1.0 - t), (s.b, t)])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dual, rows)
    }

    pub fn dim(&self) -> usize {
        self.dual.len()
    }

    pub fn n_data(&self) -> usize {
        self.rows.len()
    }

    pub fn dual(&self) -> &[f64] {
        &self.dual
    }

    /// Row `j` of the projection matrix as `(vertex, weight)` pairs.
    pub fn row(&self, j: usize) -> &[(usize, f64)] {
        &self.rows[j]
    }

    /// `Pᵀ 1`.
    pub fn col_sums(&self) -> &[f64] {
        &self.col_sums
    }

    fn check(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.dim() {
            return Err(invalid(format!(
                "beta has {} entries for {} vertices",
                beta.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

pub fn voronoi_loglik(ws: &LikelihoodWorkspace, lambda0: f64, beta: &[f64]) -> Result<f64> {
    ws.check(beta)?;
    if beta.iter().any(|b| !b.is_finite()) || !lambda0.is_finite() {
        return Err(Error::Numeric("non-finite latent field".into()));
    }
    let mut value = 0.0;
    for i in 0..ws.dim() {
        let w = beta[i] + lambda0;
        value += ws.col_sums[i] * w - ws.dual[i] * w.exp();
    }
    Ok(value)
}

/// `Pᵀ 1 − α ∘ exp(w)`.
pub fn grad_voronoi_loglik(ws: &LikelihoodWorkspace, lambda0: f64, beta: &[f64]) -> Vec<f64> {
    beta.iter()
        .enumerate()
        .map(|(i, b)| ws.col_sums[i] - ws.dual[i] * (b + lambda0).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RectDomain;
    use crate::pointprocess::LogLinearIntensity;
    use crate::pointprocess::PlanarIntensity;
    use crate::rng::seeded;
    use rand::Rng;
    use std::sync::Arc;

    fn random_points(domain: &RectDomain, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| {
                Point::new(
                    rng.random_range(domain.x_min..domain.x_max),
                    rng.random_range(domain.y_min..domain.y_max),
                )
            })
            .collect()
    }

    /// Direct form with the stacked vectors `y = (0, 1)`, `α = (dual, 0)`.
    fn stacked_oracle(tess: &Tessellation, pts: &[Point], lambda0: f64, beta: &[f64]) -> f64 {
        let w: Vec<f64> = beta.iter().map(|b| b + lambda0).collect();
        let mut log_eta: Vec<f64> = w.clone();
        for p in pts {
            log_eta.push(tess.eval_basis(p).unwrap().dot(&w));
        }
        let n = w.len();
        let mut y = vec![0.0; n];
        y.extend(std::iter::repeat_n(1.0, pts.len()));
        let mut a = tess.dual_areas().to_vec();
        a.extend(std::iter::repeat_n(0.0, pts.len()));
        (0..log_eta.len())
            .map(|i| y[i] * log_eta[i] - a[i] * log_eta[i].exp())
            .sum()
    }

    #[test]
    fn matches_stacked_form() {
        let d = RectDomain::new(-1.0, 0.0, 2.0, 2.0).unwrap();
        let t = Tessellation::triangular(&d, 5, 4).unwrap();
        let pts = random_points(&d, 30, 1);
        let ws = LikelihoodWorkspace::planar(&t, &pts).unwrap();
        let mut rng = seeded(2);
        let beta: Vec<f64> = (0..t.n_vertices())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let got = voronoi_loglik(&ws, 0.7, &beta).unwrap();
        let want = stacked_oracle(&t, &pts, 0.7, &beta);
        assert!((got - want).abs() < 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn no_data_zero_field() {
        let d = RectDomain::new(0.0, 0.0, 3.0, 2.0).unwrap();
        let t = Tessellation::triangular(&d, 4, 6).unwrap();
        let ws = LikelihoodWorkspace::planar(&t, &[]).unwrap();
        let v = voronoi_loglik(&ws, 0.3, &vec![0.0; t.n_vertices()]).unwrap();
        assert!((v + 0.3f64.exp() * 6.0).abs() < 1e-12);
        let g = grad_voronoi_loglik(&ws, 0.3, &vec![0.0; t.n_vertices()]);
        for (gi, a) in g.iter().zip(t.dual_areas()) {
            assert!((gi + 0.3f64.exp() * a).abs() < 1e-14);
        }
    }

    #[test]
    fn shift_invariance_and_constant_field() {
        let d = RectDomain::square(0.0, 2.0).unwrap();
        let t = Tessellation::square(&d, 5, 5).unwrap();
        let pts = random_points(&d, 12, 3);
        let ws = LikelihoodWorkspace::planar(&t, &pts).unwrap();
        let mut rng = seeded(4);
        let beta: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = beta.iter().map(|b| b - 0.8).collect();
        let a = voronoi_loglik(&ws, 0.1, &beta).unwrap();
        let b = voronoi_loglik(&ws, 0.9, &shifted).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs());

        let empty = LikelihoodWorkspace::planar(&t, &[]).unwrap();
        let c = 0.45;
        let v = voronoi_loglik(&empty, 0.2, &[c; 25]).unwrap();
        let field = LogLinearIntensity::new(Arc::new(t.clone()), 0.2, vec![c; 25]).unwrap();
        assert!((-v - field.integral()).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = RectDomain::square(0.0, 1.0).unwrap();
        let t = Tessellation::triangular(&d, 4, 4).unwrap();
        let pts = random_points(&d, 40, 5);
        let ws = LikelihoodWorkspace::planar(&t, &pts).unwrap();
        let mut rng = seeded(6);
        let beta: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = grad_voronoi_loglik(&ws, 3.0, &beta);
        let h = 1e-5;
        for i in 0..16 {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (voronoi_loglik(&ws, 3.0, &up).unwrap()
                - voronoi_loglik(&ws, 3.0, &dn).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let d = RectDomain::square(0.0, 1.0).unwrap();
        let t = Tessellation::triangular(&d, 3, 3).unwrap();
        let ws = LikelihoodWorkspace::planar(&t, &[]).unwrap();
        assert!(voronoi_loglik(&ws, 0.0, &[0.0; 4]).is_err());
        let mut b = vec![0.0; 9];
        b[2] = f64::NAN;
        assert!(matches!(
            voronoi_loglik(&ws, 0.0, &b),
            Err(Error::Numeric(_))
        ));
        assert!(LikelihoodWorkspace::planar(&t, &[Point::new(2.0, 0.0)]).is_err());
    }

    #[test]
    fn network_dual_lengths_partition_total() {
        let net = LinearNetwork::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(2.0, 0.0),
                Point::new(2.0, 3.0),
                Point::new(4.0, 0.0),
            ],
            &[(0, 1), (1, 2), (1, 3)],
        )
        .unwrap();
        let ws = LikelihoodWorkspace::network(&net, &[NetLocation::new(1, 0.75)]).unwrap();
        let total: f64 = ws.dual().iter().sum();
        assert!((total - net.total_length()).abs() < 1e-12);
        assert_eq!(ws.dual()[1], 1.0 + 1.5 + 1.0);
        assert!((ws.col_sums()[1] - 0.75).abs() < 1e-15);
        assert!((ws.col_sums()[2] - 0.25).abs() < 1e-15);
    }
}
