use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::PrivacyBudget;
use crate::error::{invalid, Error, Result};
use crate::geometry::{within_alpha, LinearNetwork, Tessellation, TessellationKind};

/// Closed-form coefficient of the equal-triangulation bound at exponent `p`
/// for `N = 1` scaling: `8 (√2^p + 2^p + 6 √5^p + 4 √8^p)`; 544 at `p = 2`.
pub fn corollary_coefficient(p: f64) -> f64 {
    let q = p / 2.0;
    8.0 * (2f64.powf(q) + 4f64.powf(q) + 6.0 * 5f64.powf(q) + 4.0 * 8f64.powf(q))
}

/// Closed-form coefficient for the square tessellation at `p = 2`.
///
/// Edge-adjacent squares (`2N(N−1)` pairs) have farthest vertices at squared
/// distance `5s²`, corner-adjacent squares (`2(N−1)²` pairs) at `8s²`, giving
/// `Σ d² ≤ 26 N² s²` and the coefficient `8 · 26 = 208`.
pub fn square_coefficient() -> f64 {
    8.0 * (2.0 * 5.0 + 2.0 * 8.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LgcpCalibration {
    /// Largest admissible `σ / l`.
    pub r_max: f64,
    pub p: f64,
    pub kind: TessellationKind,
    /// Side length entering the closed form.
    pub side: f64,
    pub coefficient: f64,
    /// Largest α the closed form covers on this grid.
    pub alpha_max: f64,
}

impl LgcpCalibration {
    /// The closed-form δ implied by `σ / l = ratio`.
    pub fn delta_at(&self, epsilon: f64, ratio: f64) -> f64 {
        self.coefficient * self.side * self.side * ratio * ratio / (epsilon * epsilon)
    }
}

/// Largest α for which the closed form's pair census holds: the smallest
/// positive gap between cells, which is the triangle altitude
/// `dx dy / √(dx² + dy²)` for triangulations. For squares the gap is
/// `min(dx, dy)`; the same `/√2` ceiling as triangles is used there.
pub fn alpha_ceiling(tess: &Tessellation) -> f64 {
    let (dx, dy) = tess.spacing();
    match tess.kind() {
        TessellationKind::Triangular => dx * dy / dx.hypot(dy),
        TessellationKind::Square => dx.min(dy) / 2f64.sqrt(),
    }
}

/// `σ / l` ceiling for the power covariance with `p = 2`.
///
/// On a non-square grid the closed form is applied with the larger spacing
/// and the larger cell count, which bounds every squared vertex distance and
/// every pair count from above.
pub fn calibrate_lgcp_ratio(
    budget: &PrivacyBudget,
    tess: &Tessellation,
) -> Result<LgcpCalibration> {
    budget.require_delta("the LGCP synthesizer")?;
    let ceiling = alpha_ceiling(tess);
    if budget.alpha > ceiling * (1.0 + 1e-12) {
        return Err(Error::CalibrationInfeasible(format!(
            "alpha {} exceeds the grid ceiling {ceiling:.6e}; use a coarser grid or a smaller alpha",
            budget.alpha
        )));
    }
    let (dx, dy) = tess.spacing();
    let (kx, ky) = tess.knots();
    let side = dx.max(dy) * ((kx - 1).max(ky - 1)) as f64;
    let coefficient = match tess.kind() {
        TessellationKind::Triangular => corollary_coefficient(2.0),
        TessellationKind::Square => square_coefficient(),
    };
    let r_max = budget.epsilon / side * (budget.delta / coefficient).sqrt();
    Ok(LgcpCalibration {
        r_max,
        p: 2.0,
        kind: tess.kind(),
        side,
        coefficient,
        alpha_max: ceiling,
    })
}

fn max_pair_variance(cov: &DMatrix<f64>, a: &[usize], b: &[usize]) -> f64 {
    let mut best: f64 = 0.0;
    for &u in a {
        for &v in b {
            best = best.max(cov[(u, u)] + cov[(v, v)] - 2.0 * cov[(u, v)]);
        }
    }
    best
}

/// `(4/ε²) Σ_{(i,j) ∈ I_α} max_{a ∈ T_i, b ∈ T_j} Var(β_a − β_b)`.
///
/// The variance of a difference of interpolants is a convex quadratic in the
/// interpolation weights, so its supremum over the two simplices is attained
/// at vertices.
pub fn lgcp_delta_bound(
    tess: &Tessellation,
    cov: &DMatrix<f64>,
    alpha: f64,
    epsilon: f64,
) -> Result<f64> {
    let n = tess.n_vertices();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(invalid(format!(
            "covariance is {}x{} for {n} vertices",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let pairs = tess.enumerate_cell_pairs(alpha)?;
    let total: f64 = pairs
        .iter()
        .map(|&(i, j)| max_pair_variance(cov, tess.cell(i), tess.cell(j)))
        .sum();
    Ok(4.0 / (epsilon * epsilon) * total)
}

/// Segment pairs `(i, j)`, `i < j`, within network set distance α.
pub fn network_segment_pairs(net: &LinearNetwork, alpha: f64) -> Result<Vec<(usize, usize)>> {
    if !(alpha > 0.0) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    let segs = net.segments();
    let scale = net.total_length();
    let mut pairs = Vec::new();
    for i in 0..segs.len() {
        let (a, b) = (segs[i].a, segs[i].b);
        for j in i + 1..segs.len() {
            let (c, d) = (segs[j].a, segs[j].b);
            let gap = net
                .node_distance(a, c)
                .min(net.node_distance(a, d))
                .min(net.node_distance(b, c))
                .min(net.node_distance(b, d));
            if within_alpha(gap, alpha, scale) {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// Network analogue of [`lgcp_delta_bound`]: cells are segments, each with
/// the linear interpolant of its two end nodes.
pub fn lgcp_delta_bound_network(
    net: &LinearNetwork,
    cov: &DMatrix<f64>,
    alpha: f64,
    epsilon: f64,
) -> Result<f64> {
    let n = net.n_nodes();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(invalid(format!(
            "covariance is {}x{} for {n} nodes",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let segs = net.segments();
    let total: f64 = network_segment_pairs(net, alpha)?
        .iter()
        .map(|&(i, j)| max_pair_variance(cov, &[segs[i].a, segs[i].b], &[segs[j].a, segs[j].b]))
        .sum();
    Ok(4.0 / (epsilon * epsilon) * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, RectDomain};
    use crate::pointprocess::power_covariance;

    fn unit() -> RectDomain {
        RectDomain::square(0.0, 1.0).unwrap()
    }

    #[test]
    fn coefficient_544() {
        assert!((corollary_coefficient(2.0) - 544.0).abs() < 1e-9);
        assert_eq!(square_coefficient(), 208.0);
    }

    #[test]
    fn closed_form_inversion() {
        let t = Tessellation::triangular(&unit(), 11, 11).unwrap();
        let b = PrivacyBudget::new(1.0, 0.0544, 0.05).unwrap();
        let c = calibrate_lgcp_ratio(&b, &t).unwrap();
        assert!((c.r_max - 0.01).abs() < 1e-15);
        assert!((c.delta_at(1.0, c.r_max) - 0.0544).abs() < 1e-12 * 0.0544);
    }

    #[test]
    fn alpha_above_ceiling_refused() {
        let t = Tessellation::triangular(&unit(), 11, 11).unwrap();
        let b = PrivacyBudget::new(1.0, 0.01, 0.2).unwrap();
        match calibrate_lgcp_ratio(&b, &t) {
            Err(Error::CalibrationInfeasible(msg)) => assert!(msg.contains("ceiling")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn perfectly_correlated_gives_zero() {
        let t = Tessellation::triangular(&unit(), 4, 4).unwrap();
        let cov = DMatrix::from_element(16, 16, 2.5);
        assert_eq!(lgcp_delta_bound(&t, &cov, 0.2, 1.0).unwrap(), 0.0);
    }

    /// Every pair of cells, every vertex pair, straight from the definition.
    fn exhaustive(t: &Tessellation, cov: &DMatrix<f64>, alpha: f64, eps: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..t.n_cells() {
            for j in i + 1..t.n_cells() {
                if !within_alpha(t.cell_distance(i, j), alpha, t.domain().diameter()) {
                    continue;
                }
                let mut best: f64 = 0.0;
                for &a in t.cell(i) {
                    for &b in t.cell(j) {
                        best = best.max(cov[(a, a)] + cov[(b, b)] - 2.0 * cov[(a, b)]);
                    }
                }
                total += best;
            }
        }
        4.0 * total / (eps * eps)
    }

    #[test]
    fn small_instance_matches_exhaustive() {
        let t = Tessellation::triangular(&unit(), 3, 3).unwrap();
        let cov = power_covariance(t.vertices(), 0.7, 0.4, 2.0);
        for &alpha in &[0.1, 0.35, 0.36, 0.8] {
            let got = lgcp_delta_bound(&t, &cov, alpha, 0.5).unwrap();
            let want = exhaustive(&t, &cov, alpha, 0.5);
            assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn bound_within_closed_form_and_round_trip() {
        for n in 2..=6usize {
            let t = Tessellation::triangular(&unit(), n + 1, n + 1).unwrap();
            let alpha = alpha_ceiling(&t);
            for &l in &[0.05, 0.3, 1.0, 10.0] {
                let sigma = 0.01 * l;
                let cov = power_covariance(t.vertices(), sigma, l, 2.0);
                let numeric = lgcp_delta_bound(&t, &cov, alpha, 1.0).unwrap();
                let closed = 544.0 * sigma * sigma / (l * l);
                assert!(numeric <= closed, "N={n} l={l}: {numeric} > {closed}");
            }
            let budget = PrivacyBudget::new(0.7, 0.02, alpha).unwrap();
            let cal = calibrate_lgcp_ratio(&budget, &t).unwrap();
            let l = 0.4;
            let cov = power_covariance(t.vertices(), l * cal.r_max, l, 2.0);
            assert!(lgcp_delta_bound(&t, &cov, alpha, 0.7).unwrap() <= budget.delta);
        }
        for n in 2..=5usize {
            let t = Tessellation::square(&unit(), n + 1, n + 1).unwrap();
            let alpha = alpha_ceiling(&t);
            let budget = PrivacyBudget::new(1.0, 0.05, alpha).unwrap();
            let cal = calibrate_lgcp_ratio(&budget, &t).unwrap();
            for &l in &[0.1, 1.0, 100.0] {
                let cov = power_covariance(t.vertices(), l * cal.r_max, l, 2.0);
                assert!(lgcp_delta_bound(&t, &cov, alpha, 1.0).unwrap() <= budget.delta);
            }
        }
    }

    #[test]
    fn monotone_in_alpha_and_variance() {
        let t = Tessellation::triangular(&unit(), 4, 4).unwrap();
        let c1 = power_covariance(t.vertices(), 0.5, 0.3, 2.0);
        let c2 = power_covariance(t.vertices(), 0.8, 0.3, 2.0);
        let mut prev = 0.0;
        for &a in &[0.01, 0.2, 0.3, 0.5, 1.0, 1.5] {
            let v = lgcp_delta_bound(&t, &c1, a, 1.0).unwrap();
            assert!(v >= prev);
            assert!(lgcp_delta_bound(&t, &c2, a, 1.0).unwrap() >= v);
            prev = v;
        }
    }

    #[test]
    fn network_bound_hand_enumeration() {
        // path A - B - C; the two segments touch at B
        let net = LinearNetwork::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(3.0, 0.0),
            ],
            &[(0, 1), (1, 2)],
        )
        .unwrap();
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.1, 0.5, 1.0, 0.3, 0.1, 0.3, 1.0]);
        let got = lgcp_delta_bound_network(&net, &cov, 0.5, 2.0).unwrap();
        // node pairs (A,B) 1.0, (A,C) 1.8, (B,B) 0, (B,C) 1.4 -> max 1.8
        assert!((got - 4.0 / 4.0 * 1.8).abs() < 1e-12);
        let all_equal = DMatrix::from_element(3, 3, 1.0);
        assert_eq!(
            lgcp_delta_bound_network(&net, &all_equal, 0.5, 2.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn network_bound_monotone_in_alpha() {
        let net = LinearNetwork::new(
            (0..6).map(|i| Point::new(i as f64, 0.0)).collect(),
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)],
        )
        .unwrap();
        let cov = crate::pointprocess::power_covariance(net.nodes(), 1.0, 2.0, 1.0);
        let mut prev = 0.0;
        for &a in &[0.1, 1.5, 2.5, 10.0] {
            let v = lgcp_delta_bound_network(&net, &cov, a, 1.0).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }
}
