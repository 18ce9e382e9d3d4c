use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{polygon_area, polygon_distance, within_alpha, Point, RectDomain, SpatialDomain};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TessellationKind {
    /// Each grid square split into two right triangles along the
    /// lower-left to upper-right diagonal.
    Triangular,
    /// Grid squares with bilinear basis functions.
    Square,
}

impl TessellationKind {
    pub fn vertices_per_cell(self) -> usize {
        match self {
            TessellationKind::Triangular => 3,
            TessellationKind::Square => 4,
        }
    }
}

/// Interpolation weights of a location over the vertices of its cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisWeights {
    pub cell: usize,
    len: usize,
    idx: [usize; 4],
    w: [f64; 4],
}

impl BasisWeights {
    pub(crate) fn from_parts(cell: usize, entries: &[(usize, f64)]) -> Self {
        let mut idx = [0; 4];
        let mut w = [0.0; 4];
        for (k, &(i, v)) in entries.iter().enumerate() {
            idx[k] = i;
            w[k] = v;
        }
        BasisWeights {
            cell,
            len: entries.len(),
            idx,
            w,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx[..self.len]
            .iter()
            .copied()
            .zip(self.w[..self.len].iter().copied())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `Σ_k w_k · values[idx_k]`.
    pub fn dot(&self, values: &[f64]) -> f64 {
        self.iter().map(|(i, w)| w * values[i]).sum()
    }
}

/// Regular triangular or square tessellation of a rectangle.
///
/// Vertex `(i, j)` (column `i`, row `j`) has index `j * nx + i`. Grid square
/// `(i, j)` spans vertices `(i, j)` to `(i + 1, j + 1)`.
#[derive(Clone, Debug)]
pub struct Tessellation {
    domain: RectDomain,
    kind: TessellationKind,
    nx: usize,
    ny: usize,
    vertices: Vec<Point>,
    cells: Vec<usize>,
    dual_areas: Vec<f64>,
}

impl Tessellation {
    /// Equal triangulation with `knots_x × knots_y` grid points:
    /// `2 (knots_x − 1)(knots_y − 1)` right triangles.
    pub fn triangular(domain: &RectDomain, knots_x: usize, knots_y: usize) -> Result<Self> {
        Self::regular(domain, TessellationKind::Triangular, knots_x, knots_y)
    }

    pub fn square(domain: &RectDomain, knots_x: usize, knots_y: usize) -> Result<Self> {
        Self::regular(domain, TessellationKind::Square, knots_x, knots_y)
    }

    pub fn build(
        domain: &SpatialDomain,
        kind: TessellationKind,
        knots_x: usize,
        knots_y: usize,
    ) -> Result<Self> {
        match domain {
            SpatialDomain::Rect(r) => Self::regular(r, kind, knots_x, knots_y),
            SpatialDomain::Network(_) => Err(Error::UnsupportedDomain(
                "grid tessellations require a rectangular domain".into(),
            )),
        }
    }

    fn regular(domain: &RectDomain, kind: TessellationKind, nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(invalid(format!(
                "need at least 2 knots per dimension, got {nx} x {ny}"
            )));
        }
        let mut vertices = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                vertices.push(Point::new(
                    grid_coord(domain.x_min, domain.x_max, i, nx),
                    grid_coord(domain.y_min, domain.y_max, j, ny),
                ));
            }
        }
        let mut cells = Vec::new();
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let ll = j * nx + i;
                let lr = ll + 1;
                let ul = ll + nx;
                let ur = ul + 1;
                match kind {
                    TessellationKind::Triangular => {
                        cells.extend_from_slice(&[ll, lr, ur]);
                        cells.extend_from_slice(&[ll, ur, ul]);
                    }
                    TessellationKind::Square => cells.extend_from_slice(&[ll, lr, ur, ul]),
                }
            }
        }
        let mut tess = Tessellation {
            domain: *domain,
            kind,
            nx,
            ny,
            vertices,
            cells,
            dual_areas: Vec::new(),
        };
        tess.dual_areas = build_voronoi_dual(&tess);
        Ok(tess)
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn kind(&self) -> TessellationKind {
        self.kind
    }

    pub fn knots(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Grid spacing `(dx, dy)`.
    pub fn spacing(&self) -> (f64, f64) {
        (
            self.domain.width() / (self.nx - 1) as f64,
            self.domain.height() / (self.ny - 1) as f64,
        )
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / self.kind.vertices_per_cell()
    }

    /// Vertex indices of `cell`, counter-clockwise.
    pub fn cell(&self, cell: usize) -> &[usize] {
        let k = self.kind.vertices_per_cell();
        &self.cells[cell * k..(cell + 1) * k]
    }

    pub fn cell_polygon(&self, cell: usize) -> Vec<Point> {
        self.cell(cell).iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        polygon_area(&self.cell_polygon(cell))
    }

    /// Dual-cell area attached to each vertex.
    pub fn dual_areas(&self) -> &[f64] {
        &self.dual_areas
    }

    /// Index of the grid square containing `s` (closed on the far edges).
    fn grid_square(&self, s: &Point) -> Result<(usize, usize, f64, f64)> {
        if !self.domain.contains(s) {
            return Err(Error::OutOfDomain { x: s.x, y: s.y });
        }
        let (dx, dy) = self.spacing();
        let fi = ((s.x - self.domain.x_min) / dx).floor();
        let fj = ((s.y - self.domain.y_min) / dy).floor();
        let i = (fi.max(0.0) as usize).min(self.nx - 2);
        let j = (fj.max(0.0) as usize).min(self.ny - 2);
        let x0 = self.vertices[j * self.nx + i].x;
        let y0 = self.vertices[j * self.nx + i].y;
        let u = ((s.x - x0) / dx).clamp(0.0, 1.0);
        let v = ((s.y - y0) / dy).clamp(0.0, 1.0);
        Ok((i, j, u, v))
    }

    /// Index of a cell containing `s`.
    pub fn locate(&self, s: &Point) -> Result<usize> {
        Ok(self.eval_basis(s)?.cell)
    }

    /// Piecewise-linear basis weights at `s`: barycentric on triangles,
    /// bilinear on squares.
    pub fn eval_basis(&self, s: &Point) -> Result<BasisWeights> {
        let (i, j, u, v) = self.grid_square(s)?;
        let sq = j * (self.nx - 1) + i;
        let ll = j * self.nx + i;
        let (lr, ul) = (ll + 1, ll + self.nx);
        let ur = ul + 1;
        Ok(match self.kind {
            TessellationKind::Triangular => {
                if u >= v {
                    BasisWeights::from_parts(2 * sq, &[(ll, 1.0 - u), (lr, u - v), (ur, v)])
                } else {
                    BasisWeights::from_parts(2 * sq + 1, &[(ll, 1.0 - v), (ur, u), (ul, v - u)])
                }
            }
            TessellationKind::Square => BasisWeights::from_parts(
                sq,
                &[
                    (ll, (1.0 - u) * (1.0 - v)),
                    (lr, u * (1.0 - v)),
                    (ur, u * v),
                    (ul, (1.0 - u) * v),
                ],
            ),
        })
    }

    /// Bounding box of a cell.
    fn cell_bbox(&self, cell: usize) -> [f64; 4] {
        let mut b = [
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ];
        for &v in self.cell(cell) {
            let p = self.vertices[v];
            b[0] = b[0].min(p.x);
            b[1] = b[1].min(p.y);
            b[2] = b[2].max(p.x);
            b[3] = b[3].max(p.y);
        }
        b
    }

    /// Uniform location inside `cell`.
    pub fn sample_in_cell<R: Rng + ?Sized>(&self, cell: usize, rng: &mut R) -> Point {
        let poly = self.cell_polygon(cell);
        match self.kind {
            TessellationKind::Triangular => {
                let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
                if a + b > 1.0 {
                    a = 1.0 - a;
                    b = 1.0 - b;
                }
                let (p0, p1, p2) = (poly[0], poly[1], poly[2]);
                Point::new(
                    p0.x + a * (p1.x - p0.x) + b * (p2.x - p0.x),
                    p0.y + a * (p1.y - p0.y) + b * (p2.y - p0.y),
                )
            }
            TessellationKind::Square => {
                let [x0, y0, x1, y1] = self.cell_bbox(cell);
                Point::new(
                    x0 + rng.random::<f64>() * (x1 - x0),
                    y0 + rng.random::<f64>() * (y1 - y0),
                )
            }
        }
    }

    /// Shortest distance between the closed cells `a` and `b`.
    pub fn cell_distance(&self, a: usize, b: usize) -> f64 {
        polygon_distance(&self.cell_polygon(a), &self.cell_polygon(b))
    }

    /// All unordered cell pairs `(i, j)`, `i < j`, within set distance
    /// `alpha` (see [`within_alpha`]). Touching cells have distance zero and
    /// are always present.
    pub fn enumerate_cell_pairs(&self, alpha: f64) -> Result<Vec<(usize, usize)>> {
        if !(alpha > 0.0) {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        let n = self.n_cells();
        let boxes: Vec<[f64; 4]> = (0..n).map(|c| self.cell_bbox(c)).collect();
        let polys: Vec<Vec<Point>> = (0..n).map(|c| self.cell_polygon(c)).collect();
        let scale = self.domain.diameter();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&boxes[i], &boxes[j]);
                let gx = (b[0] - a[2]).max(a[0] - b[2]).max(0.0);
                let gy = (b[1] - a[3]).max(a[1] - b[3]).max(0.0);
                if gx.hypot(gy) > alpha {
                    continue;
                }
                if within_alpha(polygon_distance(&polys[i], &polys[j]), alpha, scale) {
                    pairs.push((i, j));
                }
            }
        }
        Ok(pairs)
    }
}

fn grid_coord(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

/// Circumcenter of a non-degenerate triangle.
fn circumcenter(a: &Point, b: &Point, c: &Point) -> Point {
    let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    let (a2, b2, c2) = (
        a.x * a.x + a.y * a.y,
        b.x * b.x + b.y * b.y,
        c.x * c.x + c.y * c.y,
    );
    Point::new(
        (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d,
        (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d,
    )
}

/// Per-vertex dual-cell areas.
///
/// Within each cell, a vertex owns the polygon bounded by the midpoints of its
/// two cell edges and the cell circumcenter. Cells here are right triangles or
/// rectangles, so the circumcenter lies in the closed cell, the pieces tile
/// every cell exactly, and the dual cells coincide with the Voronoi cells of
/// the grid clipped to the domain.
pub fn build_voronoi_dual(tess: &Tessellation) -> Vec<f64> {
    let mut areas = vec![0.0; tess.n_vertices()];
    for c in 0..tess.n_cells() {
        let poly = tess.cell_polygon(c);
        let center = match tess.kind {
            TessellationKind::Triangular => circumcenter(&poly[0], &poly[1], &poly[2]),
            TessellationKind::Square => poly[0].midpoint(&poly[2]),
        };
        let k = poly.len();
        for (m, &v) in tess.cell(c).iter().enumerate() {
            let p = poly[m];
            let next = poly[(m + 1) % k];
            let prev = poly[(m + k - 1) % k];
            areas[v] += polygon_area(&[p, p.midpoint(&next), center, p.midpoint(&prev)]);
        }
    }
    areas
}
