//! Point patterns, intensity models and exact Poisson samplers.

mod gaussian;
mod intensity;
mod sampling;

pub use gaussian::{power_covariance, sample_gaussian_vector, sample_with_factor};
pub use intensity::{
    edge_correction, log_edge_correction_1d, std_normal_cdf, CellGrid, FnIntensity, IntensityModel,
    KernelIntensity, LogLinearIntensity, NetworkIntensity, NetworkIntensityModel, NetworkLogLinear,
    NetworkPiecewiseConstant, PiecewiseConstant, PlanarIntensity,
};
pub use sampling::{
    poisson_count, sample_homogeneous, sample_homogeneous_network, sample_kernel_mixture,
    sample_loglinear, sample_loglinear_network, sample_model, sample_piecewise_constant,
    sample_piecewise_constant_network, sample_thinning, sample_truncated_normal,
    SamplerDiagnostics,
};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{LinearNetwork, NetLocation, Point, RectDomain};

/// Finite pattern of points in a rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarPattern {
    domain: RectDomain,
    points: Vec<Point>,
}

impl PlanarPattern {
    pub fn new(domain: RectDomain, points: Vec<Point>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !domain.contains(p)) {
            return Err(Error::OutOfDomain { x: p.x, y: p.y });
        }
        Ok(PlanarPattern { domain, points })
    }

    pub fn empty(domain: RectDomain) -> Self {
        PlanarPattern {
            domain,
            points: Vec::new(),
        }
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Finite pattern of points on a linear network.
#[derive(Clone, Debug)]
pub struct NetworkPattern {
    network: Arc<LinearNetwork>,
    locations: Vec<NetLocation>,
}

impl NetworkPattern {
    pub fn new(network: Arc<LinearNetwork>, locations: Vec<NetLocation>) -> Result<Self> {
        for l in &locations {
            network.check_location(l)?;
        }
        Ok(NetworkPattern { network, locations })
    }

    pub fn network(&self) -> &Arc<LinearNetwork> {
        &self.network
    }

    pub fn locations(&self) -> &[NetLocation] {
        &self.locations
    }

    /// Planar coordinates of the locations.
    pub fn points(&self) -> Vec<Point> {
        self.locations
            .iter()
            .map(|l| self.network.location_point(l))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

#[derive(Clone, Debug)]
pub enum PointPattern {
    Planar(PlanarPattern),
    Network(NetworkPattern),
}

impl PointPattern {
    pub fn len(&self) -> usize {
        match self {
            PointPattern::Planar(p) => p.len(),
            PointPattern::Network(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_checked() {
        let d = RectDomain::square(0.0, 1.0).unwrap();
        assert!(PlanarPattern::new(d, vec![Point::new(0.5, 0.5)]).is_ok());
        assert!(PlanarPattern::new(d, vec![Point::new(1.5, 0.5)]).is_err());
        let net = Arc::new(
            LinearNetwork::new(vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0)], &[(0, 1)])
                .unwrap(),
        );
        assert!(NetworkPattern::new(net.clone(), vec![NetLocation::new(0, 1.0)]).is_ok());
        assert!(NetworkPattern::new(net.clone(), vec![NetLocation::new(0, 3.0)]).is_err());
        assert!(NetworkPattern::new(net, vec![NetLocation::new(1, 0.0)]).is_err());
    }
}
