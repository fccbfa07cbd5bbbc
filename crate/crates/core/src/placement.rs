//! Drone positions that point the array's main lobe at a ground user.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{cart_to_sph, rotation_between, Mat3, SphDirection, Vec3};
use crate::pattern::{
    directivity_elements, radiated_power_elements, radiated_power_integral,
    ArrayConfig, Element, ElementPattern,
};
use crate::quadrature::QuadratureSpec;
use crate::spacing_opt::{initial_spacing, optimize_spacing, OptimizerSettings, SpacingResult};

/// Positions below this altitude are flagged.
pub const MIN_SAFE_ALTITUDE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserSite {
    pub position: Vec3,
    /// Data to deliver, in bits.
    pub load_bits: f64,
}

/// Array center and the direction of the drone-1 half axis (polar `alpha`,
/// azimuth `gamma`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayPose {
    pub origin: Vec3,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for ArrayPose {
    fn default() -> Self {
        Self {
            origin: Vec3::new(0.0, 0.0, 100.0),
            alpha: std::f64::consts::FRAC_PI_2,
            gamma: 0.0,
        }
    }
}

impl ArrayPose {
    pub fn axis(&self) -> Vec3 {
        SphDirection::new(self.alpha, self.gamma).unit_vector()
    }

    /// Rotation taking the array frame (axis along +x) to the reference pose.
    pub fn frame(&self) -> Result<Mat3> {
        rotation_between(&Vec3::x(), &self.axis())
    }
}

/// Angles of `user` seen from the array center.
pub fn user_angles(user: &UserSite, origin: &Vec3) -> Result<SphDirection> {
    Ok(cart_to_sph(&user.position, origin)?.1)
}

/// Drone positions after rotating the reference pose so that the world
/// peak direction lands on `target`.
///
/// `peak` is given in the array frame. Drone `m <= M/2` sits at
/// `R d_m a0`, drone `m > M/2` at `-R d_{M+1-m} a0`.
pub fn place_drones(
    d_star: &[f64],
    pose: &ArrayPose,
    peak: SphDirection,
    target: SphDirection,
) -> Result<(Vec<Vec3>, Mat3)> {
    let frame = pose.frame()?;
    let world_peak = frame * peak.unit_vector();
    let rot = rotation_between(&world_peak, &target.unit_vector())?;
    let axis = rot * pose.axis();
    let n = d_star.len();
    let mut out = Vec::with_capacity(2 * n);
    for &d in d_star {
        out.push(pose.origin + axis * d);
    }
    for &d in d_star.iter().rev() {
        out.push(pose.origin - axis * d);
    }
    Ok((out, rot * frame))
}

/// Per-user placement outcome.
#[derive(Debug, Clone)]
pub struct Placement {
    pub positions: Vec<Vec3>,
    /// Rotation from the array frame to the world.
    pub orientation: Mat3,
    pub target: SphDirection,
    pub range: f64,
    pub directivity: f64,
    pub gain: f64,
    pub below_min_altitude: bool,
}

/// Optimized array shared across users; spacing is computed once.
#[derive(Debug, Clone)]
pub struct ArrayPlanner {
    pub cfg: ArrayConfig,
    pub pattern: ElementPattern,
    pub pose: ArrayPose,
    pub spacing: SpacingResult,
    pub quad: QuadratureSpec,
    /// Radiated power of the optimized array (rotation invariant for an isotropic element).
    pub power: f64,
}

impl ArrayPlanner {
    pub fn new(
        cfg: &ArrayConfig,
        pattern: ElementPattern,
        pose: ArrayPose,
        d_min: f64,
        settings: &OptimizerSettings,
        quad: QuadratureSpec,
    ) -> Result<Self> {
        let d0 = initial_spacing(cfg.half_count(), cfg.wavelength, d_min);
        Self::from_initial(cfg, pattern, pose, &d0, d_min, settings, quad)
    }

    /// Like [`ArrayPlanner::new`] with an explicit starting spacing.
    pub fn from_initial(
        cfg: &ArrayConfig,
        pattern: ElementPattern,
        pose: ArrayPose,
        d_init: &[f64],
        d_min: f64,
        settings: &OptimizerSettings,
        quad: QuadratureSpec,
    ) -> Result<Self> {
        cfg.validate()?;
        let spacing = optimize_spacing(cfg, &pattern, d_init, d_min, settings, quad)?;
        let opt = cfg.with_spacing(spacing.d.clone());
        let power = radiated_power_integral(&opt, &pattern, quad);
        Ok(Self {
            cfg: opt,
            pattern,
            pose,
            spacing,
            quad,
            power,
        })
    }

    pub fn drone_count(&self) -> usize {
        self.cfg.element_count()
    }

    /// Unrotated reference placement.
    pub fn reference_positions(&self) -> Result<Vec<Vec3>> {
        let frame = self.pose.frame()?;
        let target = SphDirection::from_vector(&(frame * self.spacing.peak.unit_vector()))?;
        Ok(place_drones(&self.spacing.d, &self.pose, self.spacing.peak, target)?.0)
    }

    /// Elements (relative to the array center) of a placement.
    pub fn elements(&self, positions: &[Vec3]) -> Vec<Element> {
        let n = self.cfg.half_count();
        positions
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let (i, sign) = if j < n { (j, 1.0) } else { (2 * n - 1 - j, -1.0) };
                Element {
                    position: p - self.pose.origin,
                    amplitude: self.cfg.a[i],
                    phase: sign * self.cfg.beta[i],
                }
            })
            .collect()
    }

    /// Directivity of a placement toward `dir`.
    pub fn directivity_toward(&self, positions: &[Vec3], dir: SphDirection) -> Result<f64> {
        let el = self.elements(positions);
        let power = if self.pattern.is_isotropic() {
            self.power
        } else {
            radiated_power_elements(&el, self.cfg.wavelength, &self.pattern, self.quad)
        };
        directivity_elements(&el, self.cfg.wavelength, &self.pattern, dir, power)
    }

    /// Rotates the optimized array so its peak points at `user`.
    pub fn plan_for_user(&self, user: &UserSite) -> Result<Placement> {
        if !(user.load_bits > 0.0) {
            return Err(Error::InvalidInput("user load must be positive".into()));
        }
        let (range, target) = cart_to_sph(&user.position, &self.pose.origin)?;
        let (positions, orientation) =
            place_drones(&self.spacing.d, &self.pose, self.spacing.peak, target)?;
        let directivity = self.directivity_toward(&positions, target)?;
        let below_min_altitude = positions.iter().any(|p| p.z < MIN_SAFE_ALTITUDE);
        Ok(Placement {
            positions,
            orientation,
            target,
            range,
            directivity,
            gain: directivity * self.cfg.efficiency,
            below_min_altitude,
        })
    }
}

/// Optimizes the spacing and places the drones for one user.
pub fn plan_array_for_user(
    cfg: &ArrayConfig,
    pattern: ElementPattern,
    user: &UserSite,
    pose: ArrayPose,
    d_min: f64,
    settings: &OptimizerSettings,
    quad: QuadratureSpec,
) -> Result<Placement> {
    ArrayPlanner::new(cfg, pattern, pose, d_min, settings, quad)?.plan_for_user(user)
}

/// Writes `user_index, drone_index, x, y, z` rows.
pub fn write_poses_csv<W: Write>(out: W, poses: &[Vec<Vec3>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_index", "drone_index", "x", "y", "z"])?;
    for (u, pose) in poses.iter().enumerate() {
        for (m, p) in pose.iter().enumerate() {
            w.write_record([
                u.to_string(),
                (m + 1).to_string(),
                format!("{:.9}", p.x),
                format!("{:.9}", p.y),
                format!("{:.9}", p.z),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
