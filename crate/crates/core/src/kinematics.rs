//! Transmission geometry: belt drive and crank-slider baseline.
//!
//! The end-effector converts actuator rotation into linear probe travel
//! through a timing belt on a pulley. A crank-slider linkage is kept as the
//! comparison mechanism whose displacement rate varies with angle, unlike the
//! belt whose rate is the constant pulley radius. All angles are radians;
//! lengths are meters; degrees only appear at CLI boundaries.

use thiserror::Error;

/// Pulley radius of the stock 96.5 mm diameter drive pulley, in meters.
pub const DEFAULT_PULLEY_RADIUS_M: f64 = 0.04825;

/// Carriage travel of the stock linear slide, in meters.
pub const DEFAULT_TRAVEL_LIMIT_M: f64 = 0.052;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("pulley radius must be positive, got {0}")]
    NonPositivePulley(f64),
    #[error("crank-slider requires rod_length > crank_radius > 0, got crank {crank}, rod {rod}")]
    BadCrank { crank: f64, rod: f64 },
    #[error("crank-slider domain error: l^2 - r^2 sin^2(theta) = {0} < 0")]
    CrankDomain(f64),
}

/// Belt pulley plus the crank-slider dimensions used for linearity
/// comparisons.
///
/// Invariants enforced at construction: `pulley_radius > 0` and
/// `rod_length > crank_radius > 0` (keeps the crank away from the square-root
/// singularity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionGeometry {
    pulley_radius: f64,
    crank_radius: f64,
    rod_length: f64,
}

impl TransmissionGeometry {
    pub fn new(
        pulley_radius: f64,
        crank_radius: f64,
        rod_length: f64,
    ) -> Result<Self, KinematicsError> {
        if !(pulley_radius > 0.0) {
            return Err(KinematicsError::NonPositivePulley(pulley_radius));
        }
        if !(crank_radius > 0.0 && rod_length > crank_radius) {
            return Err(KinematicsError::BadCrank {
                crank: crank_radius,
                rod: rod_length,
            });
        }
        Ok(Self {
            pulley_radius,
            crank_radius,
            rod_length,
        })
    }

    /// Stock geometry: 48.25 mm pulley; crank demo dimensions r = pulley
    /// radius, l = 3r (nonlinearity visible, singularity far away).
    pub fn stock() -> Self {
        Self::new(
            DEFAULT_PULLEY_RADIUS_M,
            DEFAULT_PULLEY_RADIUS_M,
            3.0 * DEFAULT_PULLEY_RADIUS_M,
        )
        .expect("stock geometry is valid")
    }

    pub fn pulley_radius(&self) -> f64 {
        self.pulley_radius
    }

    pub fn crank_radius(&self) -> f64 {
        self.crank_radius
    }

    pub fn rod_length(&self) -> f64 {
        self.rod_length
    }

    /// Linear carriage displacement of the belt drive: `x = r * theta`.
    pub fn belt_displacement(&self, theta: f64) -> f64 {
        self.pulley_radius * theta
    }

    /// Displacement rate of the belt drive, constant in `theta`.
    pub fn belt_rate(&self) -> f64 {
        self.pulley_radius
    }

    /// Slider displacement of the crank-slider baseline:
    /// `x = r (1 - cos theta) + sqrt(l^2 - r^2 sin^2 theta)`.
    pub fn crank_displacement(&self, theta: f64) -> Result<f64, KinematicsError> {
        let r = self.crank_radius;
        let l = self.rod_length;
        let s = theta.sin();
        let radicand = l * l - r * r * s * s;
        if radicand < 0.0 {
            return Err(KinematicsError::CrankDomain(radicand));
        }
        Ok(r * (1.0 - theta.cos()) + radicand.sqrt())
    }

    /// Slider displacement rate of the crank-slider, the exact derivative
    /// of [`Self::crank_displacement`]:
    /// `dx/dtheta = r sin theta - r^2 sin theta cos theta / sqrt(l^2 - r^2 sin^2 theta)`.
    pub fn crank_rate(&self, theta: f64) -> Result<f64, KinematicsError> {
        let r = self.crank_radius;
        let l = self.rod_length;
        let s = theta.sin();
        let c = theta.cos();
        let radicand = l * l - r * r * s * s;
        if radicand < 0.0 {
            return Err(KinematicsError::CrankDomain(radicand));
        }
        Ok(r * s - r * r * s * c / radicand.sqrt())
    }

    /// Axial force delivered at the carriage for a given motor torque:
    /// `F = tau / r`.
    pub fn force_from_torque(&self, torque: f64) -> f64 {
        torque / self.pulley_radius
    }

    /// Motor torque required to deliver a given axial force: `tau = F * r`.
    pub fn torque_from_force(&self, force: f64) -> f64 {
        force * self.pulley_radius
    }
}

impl Default for TransmissionGeometry {
    fn default() -> Self {
        Self::stock()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Central finite difference, the independent oracle for displacement
    /// rates.
    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn belt_displacement_values() {
        let g = TransmissionGeometry::stock();
        assert_eq!(g.belt_displacement(0.0), 0.0);
        assert_eq!(g.belt_displacement(1.0), 0.04825);
        // Full 52 mm travel is reached at theta = 0.052 / 0.04825.
        let theta_full = DEFAULT_TRAVEL_LIMIT_M / DEFAULT_PULLEY_RADIUS_M;
        assert!((theta_full - 1.0777).abs() < 1e-4);
        assert!((g.belt_displacement(theta_full) - 0.052).abs() < 1e-15);
    }

    #[test]
    fn crank_displacement_values() {
        let g = TransmissionGeometry::new(1.0, 1.0, 2.0).unwrap();
        assert_eq!(g.crank_displacement(0.0).unwrap(), 2.0);
        let x = g.crank_displacement(PI / 2.0).unwrap();
        assert!((x - (1.0 + 3.0_f64.sqrt())).abs() < 1e-12, "got {x}");
        assert!((g.crank_displacement(PI).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn belt_rate_is_constant_and_matches_finite_difference() {
        let g = TransmissionGeometry::stock();
        let r0 = g.belt_rate();
        assert_eq!(r0, 0.04825);
        let one = TransmissionGeometry::new(1.0, 1.0, 2.0).unwrap();
        assert_eq!(one.belt_rate(), 1.0);
        for i in 0..1000 {
            let theta = i as f64 * 0.0123;
            // Bitwise identical regardless of angle.
            assert_eq!(g.belt_rate().to_bits(), r0.to_bits());
            let fd = central_diff(|t| g.belt_displacement(t), theta, 1e-5);
            assert!((fd - r0).abs() < 1e-9);
        }
    }

    #[test]
    fn crank_rate_values() {
        let g = TransmissionGeometry::new(1.0, 1.0, 2.0).unwrap();
        assert_eq!(g.crank_rate(0.0).unwrap(), 0.0);
        let v = g.crank_rate(PI / 2.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crank_rate_matches_finite_difference_oracle() {
        // Deterministic parameter sweep with l >= 1.5 r.
        let mut worst: f64 = 0.0;
        for ri in 1..=5 {
            let r = 0.02 * ri as f64;
            for li in 0..4 {
                let l = r * (1.5 + 0.7 * li as f64);
                let g = TransmissionGeometry::new(r, r, l).unwrap();
                let mut theta = 0.0;
                while theta < 2.0 * PI {
                    let fd = central_diff(|t| g.crank_displacement(t).unwrap(), theta, 1e-5);
                    let an = g.crank_rate(theta).unwrap();
                    worst = worst.max((fd - an).abs());
                    theta += 0.05;
                }
            }
        }
        assert!(worst <= 1e-6, "worst finite-difference gap {worst}");
    }

    #[test]
    fn nonlinearity_ordering() {
        // l = 2r: the crank rate swings while the belt rate does not move a bit.
        let g = TransmissionGeometry::new(0.04825, 0.04825, 2.0 * 0.04825).unwrap();
        let n = 720;
        let rates: Vec<f64> = (0..n)
            .map(|i| g.crank_rate(PI * i as f64 / n as f64).unwrap())
            .collect();
        let mean = rates.iter().sum::<f64>() / n as f64;
        let max_dev = rates.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max);
        assert!(max_dev > 0.1 * mean.abs(), "dev {max_dev} vs mean {mean}");

        let belt_bits = g.belt_rate().to_bits();
        let belt_dev = (0..n)
            .map(|_| g.belt_rate())
            .all(|r| r.to_bits() == belt_bits);
        assert!(belt_dev);
    }

    #[test]
    fn force_torque_conversion() {
        let g = TransmissionGeometry::stock();
        // Rated 3 Nm through a 48.25 mm pulley: 62.18 N of axial force.
        let f = g.force_from_torque(3.0);
        assert!((f - 62.18).abs() < 0.005, "got {f}");
        assert_eq!(g.force_from_torque(0.0), 0.0);
        for tau in [-3.0_f64, -0.5, 0.0, 0.7, 3.0] {
            let back = g.torque_from_force(g.force_from_torque(tau));
            assert!((back - tau).abs() <= f64::EPSILON * tau.abs());
        }
    }

    #[test]
    fn constructor_rejects_bad_dimensions() {
        assert!(TransmissionGeometry::new(0.0, 1.0, 2.0).is_err());
        assert!(TransmissionGeometry::new(1.0, 0.0, 2.0).is_err());
        assert!(TransmissionGeometry::new(1.0, 2.0, 2.0).is_err());
        assert!(TransmissionGeometry::new(1.0, 2.0, 1.0).is_err());
    }
}
