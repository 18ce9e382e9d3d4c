use crate::error::{Error, Result};
use crate::geometry::{LinearNetwork, NetLocation};
use crate::pointprocess::{NetworkIntensity, NetworkPattern};

use super::KCurve;

/// Shortest-path structure around a source location, enough to count the
/// points at any exact distance from it.
///
/// Along a segment whose ends are at distances `d₁, d₂`, the distance to
/// the source rises with slope 1 from each end and meets at the peak
/// `(d₁ + d₂ + length) / 2`. For a radius `r` strictly between an end value
/// and the peak, that end contributes one perimeter point; the source's own
/// segment is split at the source into two such pieces.
#[derive(Clone, Debug)]
pub struct PerimeterProfile {
    source: NetLocation,
    node_dist: Vec<f64>,
    ends: Vec<f64>,
    peaks: Vec<f64>,
    nodes: Vec<f64>,
    tol: f64,
}

impl PerimeterProfile {
    pub fn new(net: &LinearNetwork, source: &NetLocation) -> Self {
        let node_dist = net.distances_to_nodes(source);
        let mut ends = Vec::with_capacity(2 * net.n_segments() + 2);
        let mut peaks = Vec::with_capacity(net.n_segments() + 1);
        for (k, s) in net.segments().iter().enumerate() {
            if k == source.seg {
                for (len, d_end) in [
                    (source.offset, node_dist[s.a]),
                    (s.length - source.offset, node_dist[s.b]),
                ] {
                    if len > 0.0 {
                        ends.push(0.0);
                        ends.push(d_end);
                        peaks.push(0.5 * (d_end + len));
                    }
                }
            } else {
                let (da, db) = (node_dist[s.a], node_dist[s.b]);
                ends.push(da);
                ends.push(db);
                peaks.push(0.5 * (da + db + s.length));
            }
        }
        ends.sort_by(f64::total_cmp);
        peaks.sort_by(f64::total_cmp);
        let mut nodes = node_dist.clone();
        nodes.sort_by(f64::total_cmp);
        PerimeterProfile {
            source: *source,
            node_dist,
            ends,
            peaks,
            nodes,
            tol: 1e-9 * net.total_length(),
        }
    }

    pub fn source(&self) -> &NetLocation {
        &self.source
    }

    /// Distances from the source to every node.
    pub fn node_distances(&self) -> &[f64] {
        &self.node_dist
    }

    fn count_below(v: &[f64], x: f64) -> usize {
        v.partition_point(|&y| y < x)
    }

    fn count_near(v: &[f64], x: f64, tol: f64) -> usize {
        Self::count_below(v, x + tol + f64::MIN_POSITIVE)
            .saturating_sub(Self::count_below(v, x - tol))
    }

    /// Number of network points at distance exactly `r`: one per segment
    /// side whose value is below `r` while the peak is above it, one per
    /// peak equal to `r`, and one per node at distance `r`.
    pub fn count(&self, r: f64) -> usize {
        // below r itself the source's own ends (at 0) must stay strictly inside
        let t = self.tol.min(0.5 * r);
        let sides = Self::count_below(&self.ends, r - t);
        let below = Self::count_below(&self.peaks, r - t);
        let at_peak = Self::count_near(&self.peaks, r, t);
        let at_node = Self::count_near(&self.nodes, r, t);
        (sides + at_node).saturating_sub(2 * below + at_peak)
    }

    /// Shortest-path distance from the source to `v`.
    pub fn distance_to(&self, net: &LinearNetwork, v: &NetLocation) -> f64 {
        let s = &net.segments()[v.seg];
        let mut d = (self.node_dist[s.a] + v.offset).min(self.node_dist[s.b] + s.length - v.offset);
        if v.seg == self.source.seg {
            d = d.min((v.offset - self.source.offset).abs());
        }
        d
    }
}

/// `m(u, r)`: the number of network points at shortest-path distance `r`
/// from `u`.
pub fn perimeter_count(net: &LinearNetwork, u: &NetLocation, r: f64) -> usize {
    PerimeterProfile::new(net, u).count(r)
}

/// Geometrically corrected network K-function.
///
/// Without an intensity:
/// `|L| / (n(n−1)) Σ_i Σ_{j≠i} 1(d_ij ≤ r) / m(x_i, d_ij)`. With one:
/// `(Σ_i 1/λ_i)⁻¹ Σ_i Σ_{j≠i} 1(d_ij ≤ r) / (λ_i λ_j m(x_i, d_ij))`.
pub fn khat_network(
    pattern: &NetworkPattern,
    r: &[f64],
    lambda: Option<&dyn NetworkIntensity>,
) -> Result<KCurve> {
    let net = pattern.network();
    let locs = pattern.locations();
    let n = locs.len();
    if n < 2 {
        return Ok(KCurve::zeros(r));
    }
    let lam: Vec<f64> = match lambda {
        Some(f) => locs.iter().map(|l| f.value(l)).collect(),
        None => vec![1.0; n],
    };
    if let Some(i) = lam.iter().position(|l| !(*l > 0.0)) {
        return Err(Error::Evaluation(format!(
            "intensity is {} at point {i}",
            lam[i]
        )));
    }
    let r_max = r.iter().copied().fold(0.0, f64::max);
    let mut pairs = Vec::new();
    for i in 0..n {
        let prof = PerimeterProfile::new(net, &locs[i]);
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = prof.distance_to(net, &locs[j]);
            if d == 0.0 || d > r_max {
                continue;
            }
            let m = prof.count(d);
            if m == 0 {
                return Err(Error::Numeric(format!(
                    "no perimeter point found at the realized distance {d} from point {i}"
                )));
            }
            pairs.push((d, 1.0 / (lam[i] * lam[j] * m as f64)));
        }
    }
    let scale = match lambda {
        Some(_) => 1.0 / lam.iter().map(|l| 1.0 / l).sum::<f64>(),
        None => net.total_length() / (n * (n - 1)) as f64,
    };
    Ok(KCurve::from_pairs(r, pairs, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::pointprocess::sample_homogeneous_network;
    use crate::rng::seeded;
    use rand::Rng;
    use std::sync::Arc;

    fn segment(len: f64) -> Arc<LinearNetwork> {
        Arc::new(
            LinearNetwork::new(vec![Point::new(0.0, 0.0), Point::new(len, 0.0)], &[(0, 1)])
                .unwrap(),
        )
    }

    fn y_network() -> LinearNetwork {
        LinearNetwork::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(-1.0, 0.0),
                Point::new(0.5, 3f64.sqrt() / 2.0),
                Point::new(0.5, -(3f64.sqrt()) / 2.0),
            ],
            &[(0, 1), (0, 2), (0, 3)],
        )
        .unwrap()
    }

    #[test]
    fn distances_below_the_tolerance() {
        let net = segment(5000.0);
        let u = NetLocation::new(0, 2500.0);
        assert_eq!(perimeter_count(&net, &u, 2e-6), 2);
        assert_eq!(perimeter_count(&net, &NetLocation::new(0, 0.0), 2e-6), 1);
        let p = NetworkPattern::new(net, vec![u, NetLocation::new(0, 2500.0 + 2e-6)]).unwrap();
        let k = khat_network(&p, &[1e-6, 1.0], None).unwrap();
        // one pair each way at distance 2e-6, each weighted 1/2, times |L|/(n(n−1))
        assert_eq!(k.k[0], 0.0);
        assert!((k.k[1] - 5000.0 / 2.0).abs() < 1e-9, "{:?}", k.k);
    }

    /// Counts solutions of `d(u, ·) = r` by scanning each segment finely
    /// for sign changes of `d − r` and checking nodes directly.
    fn perimeter_oracle(net: &LinearNetwork, u: &NetLocation, r: f64) -> usize {
        let mut count = 0;
        for v in 0..net.n_nodes() {
            if (net.distance(u, &net.node_location(v)) - r).abs() < 1e-9 {
                count += 1;
            }
        }
        let steps = 4000;
        for (k, s) in net.segments().iter().enumerate() {
            let f = |t: f64| net.distance(u, &NetLocation::new(k, t)) - r;
            let mut prev = f(0.0);
            for i in 1..=steps {
                let t = s.length * i as f64 / steps as f64;
                let cur = f(t);
                let interior = i < steps;
                let crossed = (prev < -1e-9 && cur > 1e-9) || (prev > 1e-9 && cur < -1e-9);
                if crossed || (interior && cur.abs() <= 1e-9) {
                    count += 1;
                }
                prev = cur;
            }
        }
        count
    }

    #[test]
    fn interior_point_of_single_segment() {
        let net = segment(10.0);
        let u = NetLocation::new(0, 4.0);
        assert_eq!(perimeter_count(&net, &u, 3.0), 2);
        assert_eq!(perimeter_count(&net, &u, 5.0), 1);
        assert_eq!(perimeter_count(&net, &u, 11.0), 0);
    }

    #[test]
    fn y_network_from_a_leaf() {
        let net = y_network();
        let leaf = NetLocation::new(0, 1.0);
        assert_eq!(perimeter_count(&net, &leaf, 1.5), 2);
        assert_eq!(perimeter_count(&net, &leaf, 0.5), 1);
        assert_eq!(perimeter_count(&net, &leaf, 1.0), 1);
        assert_eq!(perimeter_count(&net, &leaf, 2.5), 0);
    }

    #[test]
    fn matches_scanning_oracle_with_loops() {
        let net = LinearNetwork::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(3.0, 0.0),
                Point::new(3.0, 2.0),
                Point::new(0.0, 2.0),
                Point::new(5.0, 1.0),
            ],
            &[(0, 1), (1, 2), (2, 3), (3, 0), (1, 4), (2, 4), (0, 2)],
        )
        .unwrap();
        let mut rng = seeded(3);
        for _ in 0..40 {
            let u = net.sample_uniform(&mut rng);
            let r = rng.random_range(0.05..8.0);
            assert_eq!(
                perimeter_count(&net, &u, r),
                perimeter_oracle(&net, &u, r),
                "{u:?} {r}"
            );
        }
    }

    #[test]
    fn k_of_two_interior_points() {
        let net = segment(10.0);
        let pat = NetworkPattern::new(
            net.clone(),
            vec![NetLocation::new(0, 4.0), NetLocation::new(0, 5.0)],
        )
        .unwrap();
        let k = khat_network(&pat, &[0.5, 1.0, 2.0], None).unwrap();
        assert_eq!(k.k[0], 0.0);
        // each ordered pair contributes 1/m = 1/2
        assert!((k.k[1] - 10.0 / 2.0 * (0.5 + 0.5)).abs() < 1e-12);
        assert_eq!(k.k[1], k.k[2]);
    }

    #[test]
    fn k_zero_for_small_patterns_and_monotone() {
        let net = Arc::new(y_network());
        let single = NetworkPattern::new(net.clone(), vec![NetLocation::new(1, 0.3)]).unwrap();
        assert!(khat_network(&single, &[1.0], None)
            .unwrap()
            .k
            .iter()
            .all(|v| *v == 0.0));
        let locs = sample_homogeneous_network(&net, 30.0, &mut seeded(8)).unwrap();
        let pat = NetworkPattern::new(net.clone(), locs).unwrap();
        let r: Vec<f64> = (0..30).map(|i| i as f64 * 0.05).collect();
        let k = khat_network(&pat, &r, None).unwrap();
        assert_eq!(k.k[0], 0.0);
        assert!(k.k.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn inhomogeneous_form_with_constant_intensity() {
        let net = segment(20.0);
        let locs = sample_homogeneous_network(&net, 2.0, &mut seeded(9)).unwrap();
        let pat = NetworkPattern::new(net.clone(), locs).unwrap();
        let n = pat.len() as f64;
        let rate = (net.clone(), n / 20.0);
        let r = [1.0, 2.0, 4.0];
        let hom = khat_network(&pat, &r, None).unwrap();
        let inh = khat_network(&pat, &r, Some(&rate as &dyn NetworkIntensity)).unwrap();
        // with λ = n/|L| the two forms differ by the factor (n−1)/n
        for (a, b) in hom.k.iter().zip(&inh.k) {
            assert!((a * (n - 1.0) / n - b).abs() < 1e-9 * a.max(1.0));
        }
    }
}
