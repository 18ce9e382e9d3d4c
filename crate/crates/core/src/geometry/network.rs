use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{point_segment_distance, Point};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// A location on a network: segment index and distance from the segment's
/// first node `a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetLocation {
    pub seg: usize,
    pub offset: f64,
}

impl NetLocation {
    pub fn new(seg: usize, offset: f64) -> Self {
        NetLocation { seg, offset }
    }
}

/// Connected network of straight segments with the shortest-path metric.
#[derive(Debug)]
pub struct LinearNetwork {
    nodes: Vec<Point>,
    segments: Vec<Segment>,
    incident: Vec<Vec<usize>>,
    total_length: f64,
    cum_length: Vec<f64>,
    node_dist: OnceLock<Vec<f64>>,
}

impl Clone for LinearNetwork {
    fn clone(&self) -> Self {
        LinearNetwork {
            nodes: self.nodes.clone(),
            segments: self.segments.clone(),
            incident: self.incident.clone(),
            total_length: self.total_length,
            cum_length: self.cum_length.clone(),
            node_dist: OnceLock::new(),
        }
    }
}

impl LinearNetwork {
    /// Builds a network from node coordinates and node-index pairs. Segment
    /// lengths are the Euclidean lengths of the edges.
    pub fn new(nodes: Vec<Point>, edges: &[(usize, usize)]) -> Result<Self> {
        if nodes.is_empty() || edges.is_empty() {
            return Err(invalid("a network needs at least one segment"));
        }
        let n = nodes.len();
        let mut segments = Vec::with_capacity(edges.len());
        let mut incident = vec![Vec::new(); n];
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(invalid(format!("edge {k} references a missing node")));
            }
            let length = nodes[a].distance(&nodes[b]);
            if a == b || !(length > 0.0) {
                return Err(invalid(format!("edge {k} has zero length")));
            }
            incident[a].push(k);
            incident[b].push(k);
            segments.push(Segment { a, b, length });
        }
        if incident.iter().any(|s| s.is_empty()) {
            return Err(invalid("network has isolated nodes"));
        }
        let components = count_components(n, edges);
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
        let mut cum_length = Vec::with_capacity(segments.len());
        let mut total = 0.0;
        for s in &segments {
            total += s.length;
            cum_length.push(total);
        }
        Ok(LinearNetwork {
            nodes,
            segments,
            incident,
            total_length: total,
            cum_length,
            node_dist: OnceLock::new(),
        })
    }

    /// Builds a network from polylines, merging vertices closer than `tol`
    /// and keeping only the largest connected component.
    pub fn from_polylines(lines: &[Vec<Point>], tol: f64) -> Result<Self> {
        let mut nodes: Vec<Point> = Vec::new();
        let mut index: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let cell = tol.max(1e-12);
        let mut node_of = |p: Point, nodes: &mut Vec<Point>| -> usize {
            let key = ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(cands) = index.get(&(key.0 + dx, key.1 + dy)) {
                        for &c in cands {
                            if nodes[c].distance(&p) <= tol {
                                return c;
                            }
                        }
                    }
                }
            }
            nodes.push(p);
            index.entry(key).or_default().push(nodes.len() - 1);
            nodes.len() - 1
        };
        let mut edges = Vec::new();
        let mut seen = HashSet::new();
        for line in lines {
            for w in line.windows(2) {
                let a = node_of(w[0], &mut nodes);
                let b = node_of(w[1], &mut nodes);
                if a != b && seen.insert((a.min(b), a.max(b))) {
                    edges.push((a, b));
                }
            }
        }
        let (nodes, edges) = largest_component(&nodes, &edges);
        Self::new(nodes, &edges)
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Segments meeting at `node`.
    pub fn incident(&self, node: usize) -> &[usize] {
        &self.incident[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.incident[node].len()
    }

    /// The node of segment `seg` that is not `node`.
    pub fn other_end(&self, seg: usize, node: usize) -> usize {
        let s = &self.segments[seg];
        if s.a == node {
            s.b
        } else {
            s.a
        }
    }

    pub fn check_location(&self, loc: &NetLocation) -> Result<()> {
        match self.segments.get(loc.seg) {
            Some(s) if loc.offset >= 0.0 && loc.offset <= s.length => Ok(()),
            _ => Err(invalid(format!(
                "location (segment {}, offset {}) is not on the network",
                loc.seg, loc.offset
            ))),
        }
    }

    pub fn location_point(&self, loc: &NetLocation) -> Point {
        let s = &self.segments[loc.seg];
        self.nodes[s.a].lerp(&self.nodes[s.b], loc.offset / s.length)
    }

    /// A location coinciding with `node`.
    pub fn node_location(&self, node: usize) -> NetLocation {
        let seg = self.incident[node][0];
        let s = &self.segments[seg];
        NetLocation::new(seg, if s.a == node { 0.0 } else { s.length })
    }

    /// All-pairs node distances, row-major, computed on first use.
    pub fn node_distances(&self) -> &[f64] {
        self.node_dist.get_or_init(|| {
            let n = self.n_nodes();
            let mut all = Vec::with_capacity(n * n);
            for s in 0..n {
                all.extend(self.dijkstra(&[(s, 0.0)]));
            }
            all
        })
    }

    pub fn node_distance(&self, a: usize, b: usize) -> f64 {
        self.node_distances()[a * self.n_nodes() + b]
    }

    /// Shortest-path distances from a set of weighted sources to every node.
    pub fn dijkstra(&self, sources: &[(usize, f64)]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.n_nodes()];
        let mut heap = BinaryHeap::new();
        for &(s, d) in sources {
            if d < dist[s] {
                dist[s] = d;
                heap.push(HeapItem(d, s));
            }
        }
        while let Some(HeapItem(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in &self.incident[u] {
                let v = self.other_end(e, u);
                let nd = d + self.segments[e].length;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        dist
    }

    /// Distances from a location to every node.
    pub fn distances_to_nodes(&self, loc: &NetLocation) -> Vec<f64> {
        let s = &self.segments[loc.seg];
        let (da, db) = (loc.offset, s.length - loc.offset);
        let n = self.n_nodes();
        let d = self.node_distances();
        (0..n)
            .map(|v| (da + d[s.a * n + v]).min(db + d[s.b * n + v]))
            .collect()
    }

    /// Shortest-path distance between two locations.
    pub fn distance(&self, u: &NetLocation, v: &NetLocation) -> f64 {
        let su = &self.segments[u.seg];
        let sv = &self.segments[v.seg];
        let ends_u = [(su.a, u.offset), (su.b, su.length - u.offset)];
        let ends_v = [(sv.a, v.offset), (sv.b, sv.length - v.offset)];
        let mut best = if u.seg == v.seg {
            (u.offset - v.offset).abs()
        } else {
            f64::INFINITY
        };
        for &(a, da) in &ends_u {
            for &(b, db) in &ends_v {
                best = best.min(da + self.node_distance(a, b) + db);
            }
        }
        best
    }

    /// Largest node-to-node shortest-path distance.
    pub fn diameter(&self) -> f64 {
        self.node_distances().iter().copied().fold(0.0, f64::max)
    }

    /// Nearest network location to a planar point and its Euclidean distance.
    pub fn project(&self, p: &Point) -> (NetLocation, f64) {
        let mut best = (NetLocation::new(0, 0.0), f64::INFINITY);
        for (k, s) in self.segments.iter().enumerate() {
            let (a, b) = (&self.nodes[s.a], &self.nodes[s.b]);
            let d = point_segment_distance(p, a, b);
            if d < best.1 {
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                let t =
                    (((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                best = (NetLocation::new(k, t * s.length), d);
            }
        }
        best
    }

    /// Location drawn uniformly with respect to length.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> NetLocation {
        let u = rng.random::<f64>() * self.total_length;
        let seg = self
            .cum_length
            .partition_point(|&c| c <= u)
            .min(self.segments.len() - 1);
        let start = if seg == 0 {
            0.0
        } else {
            self.cum_length[seg - 1]
        };
        let len = self.segments[seg].length;
        NetLocation::new(seg, (u - start).clamp(0.0, len))
    }

    /// Splits every segment into `⌈length / resolution⌉` equal pieces.
    pub fn discretize(&self, resolution: f64) -> Result<Discretization> {
        if !(resolution > 0.0) {
            return Err(invalid(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        let mut nodes = self.nodes.clone();
        let mut edges = Vec::new();
        let mut parent = Vec::new();
        let mut children = Vec::with_capacity(self.segments.len());
        for (k, s) in self.segments.iter().enumerate() {
            let pieces = ((s.length / resolution) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let piece_len = s.length / pieces as f64;
            children.push((edges.len(), pieces, piece_len));
            let mut prev = s.a;
            for p in 1..=pieces {
                let next = if p == pieces {
                    s.b
                } else {
                    nodes.push(self.nodes[s.a].lerp(&self.nodes[s.b], p as f64 / pieces as f64));
                    nodes.len() - 1
                };
                edges.push((prev, next));
                parent.push((k, (p - 1) as f64 * piece_len));
                prev = next;
            }
        }
        let mut network = LinearNetwork::new(nodes, &edges)?;
        // keep the exact subdivision lengths so total length is preserved
        for (k, s) in network.segments.iter_mut().enumerate() {
            s.length = children[parent[k].0].2;
        }
        let mut total = 0.0;
        for (k, s) in network.segments.iter().enumerate() {
            total += s.length;
            network.cum_length[k] = total;
        }
        network.total_length = total;
        Ok(Discretization {
            network,
            parent,
            children,
        })
    }
}

/// A refined network and the correspondence with the network it came from.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub network: LinearNetwork,
    parent: Vec<(usize, f64)>,
    children: Vec<(usize, usize, f64)>,
}

impl Discretization {
    /// Location on the refined network of a location on the original one.
    pub fn map_location(&self, loc: &NetLocation) -> NetLocation {
        let (first, pieces, piece_len) = self.children[loc.seg];
        let k = ((loc.offset / piece_len).floor().max(0.0) as usize).min(pieces - 1);
        let offset = (loc.offset - k as f64 * piece_len).clamp(0.0, piece_len);
        NetLocation::new(first + k, offset)
    }

    /// Location on the original network of a refined location.
    pub fn original_location(&self, loc: &NetLocation) -> NetLocation {
        let (seg, start) = self.parent[loc.seg];
        NetLocation::new(seg, start + loc.offset)
    }

    /// Original segment containing each refined segment.
    pub fn parent_segment(&self, seg: usize) -> usize {
        self.parent[seg].0
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn component_labels(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    (0..n).map(|x| find(&mut parent, x)).collect()
}

fn count_components(n: usize, edges: &[(usize, usize)]) -> usize {
    let labels = component_labels(n, edges);
    labels.iter().collect::<HashSet<_>>().len()
}

/// Restricts a graph to its largest connected component (by total edge
/// length), re-indexing nodes.
pub fn largest_component(
    nodes: &[Point],
    edges: &[(usize, usize)],
) -> (Vec<Point>, Vec<(usize, usize)>) {
    let labels = component_labels(nodes.len(), edges);
    let mut weight: HashMap<usize, f64> = HashMap::new();
    for &(a, b) in edges {
        *weight.entry(labels[a]).or_default() += nodes[a].distance(&nodes[b]);
    }
    let Some(best) = weight
        .iter()
        .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(x.0)))
        .map(|(k, _)| *k)
    else {
        return (Vec::new(), Vec::new());
    };
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::new();
    for (i, p) in nodes.iter().enumerate() {
        if labels[i] == best && edges.iter().any(|&(a, b)| a == i || b == i) {
            remap[i] = kept.len();
            kept.push(*p);
        }
    }
    let kept_edges = edges
        .iter()
        .filter(|&&(a, _)| labels[a] == best)
        .map(|&(a, b)| (remap[a], remap[b]))
        .collect();
    (kept, kept_edges)
}
