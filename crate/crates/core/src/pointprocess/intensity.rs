use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use statrs::function::erf::erf;

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    LinearNetwork, NetLocation, Point, RectDomain, Tessellation, TessellationKind,
};

/// An intensity function on a rectangle.
pub trait PlanarIntensity: Send + Sync {
    fn value(&self, s: &Point) -> f64;
    /// `∫_S λ`.
    fn integral(&self) -> f64;
}

/// An intensity function on a linear network (per unit length).
pub trait NetworkIntensity: Send + Sync {
    fn value(&self, loc: &NetLocation) -> f64;
    fn integral(&self) -> f64;
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / SQRT_2)
}

/// `log P(lo ≤ x + h Z ≤ hi)` for a standard normal `Z`, with `x ∈ [lo, hi]`.
pub fn log_edge_correction_1d(x: f64, lo: f64, hi: f64, h: f64) -> f64 {
    let a = (lo - x) / (h * SQRT_2);
    let b = (hi - x) / (h * SQRT_2);
    // a ≤ 0 ≤ b, so the difference of erf values has no cancellation
    (0.5 * (erf(b) - erf(a))).ln()
}

/// Gaussian kernel mass retained in the rectangle:
/// `c_h(x) = ∫_S K_h(s − x) ds`.
pub fn edge_correction(domain: &RectDomain, x: &Point, h: f64) -> f64 {
    (log_edge_correction_1d(x.x, domain.x_min, domain.x_max, h)
        + log_edge_correction_1d(x.y, domain.y_min, domain.y_max, h))
    .exp()
}

/// Edge-corrected Gaussian kernel mixture
/// `λ(s) = Σ_i K_h(s − x_i) / c_h(x_i)`.
#[derive(Clone, Debug)]
pub struct KernelIntensity {
    domain: RectDomain,
    centers: Vec<Point>,
    h: f64,
    corrections: Vec<f64>,
}

impl KernelIntensity {
    pub fn new(domain: RectDomain, centers: Vec<Point>, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(invalid(format!("bandwidth must be positive, got {h}")));
        }
        if let Some(p) = centers.iter().find(|p| !domain.contains(p)) {
            return Err(Error::OutOfDomain { x: p.x, y: p.y });
        }
        let corrections = centers
            .iter()
            .map(|c| edge_correction(&domain, c, h))
            .collect();
        Ok(KernelIntensity {
            domain,
            centers,
            h,
            corrections,
        })
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn corrections(&self) -> &[f64] {
        &self.corrections
    }
}

impl PlanarIntensity for KernelIntensity {
    fn value(&self, s: &Point) -> f64 {
        let norm = 1.0 / (2.0 * PI * self.h * self.h);
        let inv = -0.5 / (self.h * self.h);
        self.centers
            .iter()
            .zip(&self.corrections)
            .map(|(c, ch)| {
                let d2 = (s.x - c.x).powi(2) + (s.y - c.y).powi(2);
                norm * (inv * d2).exp() / ch
            })
            .sum()
    }

    fn integral(&self) -> f64 {
        self.centers.len() as f64
    }
}

/// `λ(s) = exp(λ₀ + Σ_i β_i φ_i(s))` with piecewise-linear `φ_i`.
#[derive(Clone, Debug)]
pub struct LogLinearIntensity {
    tess: Arc<Tessellation>,
    lambda0: f64,
    beta: Vec<f64>,
}

impl LogLinearIntensity {
    pub fn new(tess: Arc<Tessellation>, lambda0: f64, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != tess.n_vertices() {
            return Err(invalid(format!(
                "beta has {} entries for {} vertices",
                beta.len(),
                tess.n_vertices()
            )));
        }
        if !lambda0.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numeric("non-finite log-intensity".into()));
        }
        Ok(LogLinearIntensity {
            tess,
            lambda0,
            beta,
        })
    }

    pub fn tessellation(&self) -> &Arc<Tessellation> {
        &self.tess
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Dual-mesh quadrature `Σ_i |α_i| exp(λ₀ + β_i)`.
    pub fn dual_integral(&self) -> f64 {
        self.tess
            .dual_areas()
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| a * (self.lambda0 + b).exp())
            .sum()
    }

    /// `∫` over one cell, exact on triangles and 8×8 Gauss–Legendre on squares.
    pub fn cell_integral(&self, cell: usize) -> f64 {
        let verts = self.tess.cell(cell);
        match self.tess.kind() {
            TessellationKind::Triangular => {
                let f: Vec<f64> = verts.iter().map(|&v| self.lambda0 + self.beta[v]).collect();
                2.0 * self.tess.cell_area(cell) * exp_divided_difference(f[0], f[1], f[2])
            }
            TessellationKind::Square => {
                let f: Vec<f64> = verts.iter().map(|&v| self.lambda0 + self.beta[v]).collect();
                let area = self.tess.cell_area(cell);
                let mut total = 0.0;
                for (xu, wu) in GL8 {
                    for (xv, wv) in GL8 {
                        let u = 0.5 * (xu + 1.0);
                        let v = 0.5 * (xv + 1.0);
                        let g = f[0] * (1.0 - u) * (1.0 - v)
                            + f[1] * u * (1.0 - v)
                            + f[2] * u * v
                            + f[3] * (1.0 - u) * v;
                        total += 0.25 * wu * wv * g.exp();
                    }
                }
                total * area
            }
        }
    }
}

impl PlanarIntensity for LogLinearIntensity {
    fn value(&self, s: &Point) -> f64 {
        match self.tess.eval_basis(s) {
            Ok(w) => (self.lambda0 + w.dot(&self.beta)).exp(),
            Err(_) => 0.0,
        }
    }

    fn integral(&self) -> f64 {
        (0..self.tess.n_cells())
            .map(|c| self.cell_integral(c))
            .sum()
    }
}

/// Second divided difference of `exp` at three nodes, `exp[f0, f1, f2]`.
/// `∫_T exp(linear) = 2|T| · exp[f0, f1, f2]` for the vertex values `f`.
fn exp_divided_difference(a: f64, b: f64, c: f64) -> f64 {
    let mut f = [a, b, c];
    f.sort_by(|x, y| x.total_cmp(y));
    let (f0, f1, f2) = (f[0], f[1], f[2]);
    let (p, q) = (f1 - f0, f2 - f0);
    if q > 1e-2 {
        (first_dd(f1, f2) - first_dd(f0, f1)) / q
    } else {
        let s1 = p + q;
        let s2 = p * p + p * q + q * q;
        let s3 = p * p * p + p * p * q + p * q * q + q * q * q;
        let s4 = p * s3 + q * q * q * q;
        f0.exp() * (0.5 + s1 / 6.0 + s2 / 24.0 + s3 / 120.0 + s4 / 720.0)
    }
}

fn first_dd(lo: f64, hi: f64) -> f64 {
    let d = hi - lo;
    if d == 0.0 {
        lo.exp()
    } else {
        lo.exp() * d.exp_m1() / d
    }
}

#[allow(clippy::excessive_precision)]
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Regular grid of `nx × ny` rectangular cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellGrid {
    pub domain: RectDomain,
    pub nx: usize,
    pub ny: usize,
}

impl CellGrid {
    pub fn new(domain: RectDomain, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid("cell grid needs at least one cell per dimension"));
        }
        Ok(CellGrid { domain, nx, ny })
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_width(&self) -> f64 {
        self.domain.width() / self.nx as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.domain.height() / self.ny as f64
    }

    pub fn cell_area(&self, _cell: usize) -> f64 {
        self.cell_width() * self.cell_height()
    }

    pub fn cell_areas(&self) -> Vec<f64> {
        (0..self.n_cells()).map(|c| self.cell_area(c)).collect()
    }

    /// Cell index `j * nx + i`; points on interior grid lines go to the
    /// upper/right cell.
    pub fn cell_index(&self, p: &Point) -> Option<usize> {
        if !self.domain.contains(p) {
            return None;
        }
        let i = (((p.x - self.domain.x_min) / self.cell_width()).floor() as usize).min(self.nx - 1);
        let j =
            (((p.y - self.domain.y_min) / self.cell_height()).floor() as usize).min(self.ny - 1);
        Some(j * self.nx + i)
    }

    /// `(x0, y0, x1, y1)` of a cell.
    pub fn cell_bounds(&self, cell: usize) -> (f64, f64, f64, f64) {
        let (i, j) = (cell % self.nx, cell / self.nx);
        let (w, h) = (self.cell_width(), self.cell_height());
        let x0 = self.domain.x_min + i as f64 * w;
        let y0 = self.domain.y_min + j as f64 * h;
        let x1 = if i + 1 == self.nx {
            self.domain.x_max
        } else {
            x0 + w
        };
        let y1 = if j + 1 == self.ny {
            self.domain.y_max
        } else {
            y0 + h
        };
        (x0, y0, x1, y1)
    }

    /// Number of points falling in each cell.
    pub fn counts(&self, points: &[Point]) -> Vec<usize> {
        let mut c = vec![0; self.n_cells()];
        for p in points {
            if let Some(i) = self.cell_index(p) {
                c[i] += 1;
            }
        }
        c
    }
}

/// Piecewise-constant intensity: cell `i` carries expected count `γ_i`, so
/// the intensity inside it is `γ_i / |S_i|`.
#[derive(Clone, Debug)]
pub struct PiecewiseConstant {
    grid: CellGrid,
    gamma: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(grid: CellGrid, gamma: Vec<f64>) -> Result<Self> {
        check_gamma(&gamma, grid.n_cells())?;
        Ok(PiecewiseConstant { grid, gamma })
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
}

fn check_gamma(gamma: &[f64], cells: usize) -> Result<()> {
    if gamma.len() != cells {
        return Err(invalid(format!(
            "{} cell masses for {} cells",
            gamma.len(),
            cells
        )));
    }
    if let Some(g) = gamma.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(invalid(format!("cell mass must be nonnegative, got {g}")));
    }
    Ok(())
}

impl PlanarIntensity for PiecewiseConstant {
    fn value(&self, s: &Point) -> f64 {
        self.grid
            .cell_index(s)
            .map_or(0.0, |c| self.gamma[c] / self.grid.cell_area(c))
    }

    fn integral(&self) -> f64 {
        self.gamma.iter().sum()
    }
}

/// An arbitrary intensity given by a closure, with a known upper bound for
/// thinning; the integral is computed once by tensor Gauss–Legendre
/// quadrature on a fine grid.
#[derive(Clone)]
pub struct FnIntensity {
    domain: RectDomain,
    f: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
    bound: f64,
    integral: f64,
}

impl fmt::Debug for FnIntensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnIntensity")
            .field("domain", &self.domain)
            .field("bound", &self.bound)
            .field("integral", &self.integral)
            .finish()
    }
}

impl FnIntensity {
    pub fn new(
        domain: RectDomain,
        bound: f64,
        f: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(invalid("intensity bound must be positive"));
        }
        let f: Arc<dyn Fn(&Point) -> f64 + Send + Sync> = Arc::new(f);
        let panels = 100;
        let (w, h) = (
            domain.width() / panels as f64,
            domain.height() / panels as f64,
        );
        let mut total = 0.0;
        for j in 0..panels {
            for i in 0..panels {
                let (x0, y0) = (domain.x_min + i as f64 * w, domain.y_min + j as f64 * h);
                let mut cell = 0.0;
                for (xu, wu) in GL8 {
                    for (xv, wv) in GL8 {
                        let p = Point::new(x0 + 0.5 * (xu + 1.0) * w, y0 + 0.5 * (xv + 1.0) * h);
                        cell += wu * wv * f(&p);
                    }
                }
                total += 0.25 * cell * w * h;
            }
        }
        Ok(FnIntensity {
            domain,
            f,
            bound,
            integral: total,
        })
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

impl PlanarIntensity for FnIntensity {
    fn value(&self, s: &Point) -> f64 {
        if self.domain.contains(s) {
            (self.f)(s)
        } else {
            0.0
        }
    }

    fn integral(&self) -> f64 {
        self.integral
    }
}

/// The intensity representations the planar samplers consume.
#[derive(Clone, Debug)]
pub enum IntensityModel {
    Homogeneous { domain: RectDomain, rate: f64 },
    KernelMixture(KernelIntensity),
    LogLinear(LogLinearIntensity),
    PiecewiseConstant(PiecewiseConstant),
}

impl PlanarIntensity for IntensityModel {
    fn value(&self, s: &Point) -> f64 {
        match self {
            IntensityModel::Homogeneous { domain, rate } => {
                if domain.contains(s) {
                    *rate
                } else {
                    0.0
                }
            }
            IntensityModel::KernelMixture(k) => k.value(s),
            IntensityModel::LogLinear(l) => l.value(s),
            IntensityModel::PiecewiseConstant(p) => p.value(s),
        }
    }

    fn integral(&self) -> f64 {
        match self {
            IntensityModel::Homogeneous { domain, rate } => rate * domain.area(),
            IntensityModel::KernelMixture(k) => k.integral(),
            IntensityModel::LogLinear(l) => l.integral(),
            IntensityModel::PiecewiseConstant(p) => p.integral(),
        }
    }
}

/// `λ(u) = exp(λ₀ + (1 − t) β_a + t β_b)` along each segment `(a, b)`.
#[derive(Clone, Debug)]
pub struct NetworkLogLinear {
    net: Arc<LinearNetwork>,
    lambda0: f64,
    beta: Vec<f64>,
}

impl NetworkLogLinear {
    pub fn new(net: Arc<LinearNetwork>, lambda0: f64, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != net.n_nodes() {
            return Err(invalid(format!(
                "beta has {} entries for {} nodes",
                beta.len(),
                net.n_nodes()
            )));
        }
        if !lambda0.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numeric("non-finite log-intensity".into()));
        }
        Ok(NetworkLogLinear { net, lambda0, beta })
    }

    pub fn network(&self) -> &Arc<LinearNetwork> {
        &self.net
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn segment_integral(&self, seg: usize) -> f64 {
        let s = &self.net.segments()[seg];
        s.length
            * first_dd(
                self.lambda0 + self.beta[s.a].min(self.beta[s.b]),
                self.lambda0 + self.beta[s.a].max(self.beta[s.b]),
            )
    }
}

impl NetworkIntensity for NetworkLogLinear {
    fn value(&self, loc: &NetLocation) -> f64 {
        let s = &self.net.segments()[loc.seg];
        let t = loc.offset / s.length;
        (self.lambda0 + (1.0 - t) * self.beta[s.a] + t * self.beta[s.b]).exp()
    }

    fn integral(&self) -> f64 {
        (0..self.net.n_segments())
            .map(|s| self.segment_integral(s))
            .sum()
    }
}

/// Piecewise-constant intensity on network segments: segment `i` carries
/// expected count `γ_i`.
#[derive(Clone, Debug)]
pub struct NetworkPiecewiseConstant {
    net: Arc<LinearNetwork>,
    gamma: Vec<f64>,
}

impl NetworkPiecewiseConstant {
    pub fn new(net: Arc<LinearNetwork>, gamma: Vec<f64>) -> Result<Self> {
        check_gamma(&gamma, net.n_segments())?;
        Ok(NetworkPiecewiseConstant { net, gamma })
    }

    pub fn network(&self) -> &Arc<LinearNetwork> {
        &self.net
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
}

impl NetworkIntensity for NetworkPiecewiseConstant {
    fn value(&self, loc: &NetLocation) -> f64 {
        self.gamma[loc.seg] / self.net.segments()[loc.seg].length
    }

    fn integral(&self) -> f64 {
        self.gamma.iter().sum()
    }
}

/// The intensity representations the network samplers consume.
#[derive(Clone, Debug)]
pub enum NetworkIntensityModel {
    LogLinear(NetworkLogLinear),
    PiecewiseConstant(NetworkPiecewiseConstant),
}

impl NetworkIntensity for NetworkIntensityModel {
    fn value(&self, loc: &NetLocation) -> f64 {
        match self {
            NetworkIntensityModel::LogLinear(l) => l.value(loc),
            NetworkIntensityModel::PiecewiseConstant(p) => p.value(loc),
        }
    }

    fn integral(&self) -> f64 {
        match self {
            NetworkIntensityModel::LogLinear(l) => l.integral(),
            NetworkIntensityModel::PiecewiseConstant(p) => p.integral(),
        }
    }
}

/// Constant rate on a network.
impl NetworkIntensity for (Arc<LinearNetwork>, f64) {
    fn value(&self, _loc: &NetLocation) -> f64 {
        self.1
    }

    fn integral(&self) -> f64 {
        self.1 * self.0.total_length()
    }
}
