//! Quadrotor rigid-body model: rotor mixer, equations of motion and a
//! fixed-step RK4 integrator for piecewise-constant rotor schedules.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec3};

/// Physical constants of one drone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DronePhysParams {
    /// Mass in kg.
    pub mass: f64,
    /// Rotor arm length in m.
    pub arm: f64,
    /// Lift coefficient, N s².
    pub rho1: f64,
    /// Torque coefficient, N m s².
    pub rho2: f64,
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
    /// Rotor speed limit in rad/s.
    pub v_max: f64,
    pub g: f64,
}

impl Default for DronePhysParams {
    fn default() -> Self {
        Self {
            mass: 0.5,
            arm: 0.2,
            rho1: 2.9e-5,
            rho2: 1.1e-6,
            ix: 4.9e-3,
            iy: 4.9e-3,
            iz: 8.8e-3,
            v_max: 300.0,
            g: 9.81,
        }
    }
}

impl DronePhysParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mass, self.arm, self.rho1, self.rho2, self.ix, self.iy, self.iz, self.v_max, self.g,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("drone parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn weight(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, -self.mass * self.g)
    }

    /// Thrust with every rotor at the speed limit.
    pub fn max_thrust(&self) -> f64 {
        4.0 * self.rho1 * self.v_max * self.v_max
    }
}

/// Rotor speeds `v1..v4` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorSpeeds(pub [f64; 4]);

impl RotorSpeeds {
    pub fn uniform(v: f64) -> Self {
        Self([v; 4])
    }

    pub fn check(&self, v_max: f64) -> Result<()> {
        let tol = 1e-9 * v_max;
        if self.0.iter().any(|&v| !(v >= -tol && v <= v_max + tol)) {
            return Err(Error::InvalidInput(format!(
                "rotor speeds {:?} outside [0, {}]",
                self.0, v_max
            )));
        }
        Ok(())
    }
}

/// Total thrust and the three body torques.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub thrust: f64,
    /// Pitch torque, drives the pitch angle about the y-axis.
    pub kappa1: f64,
    /// Roll torque, drives the roll angle about the x-axis.
    pub kappa2: f64,
    pub kappa3: f64,
}

pub fn mixer(v: &RotorSpeeds, p: &DronePhysParams) -> Wrench {
    let s = v.0.map(|x| x * x);
    Wrench {
        thrust: p.rho1 * (s[0] + s[1] + s[2] + s[3]),
        kappa1: p.arm * p.rho1 * (s[3] - s[1]),
        kappa2: p.arm * p.rho1 * (s[2] - s[0]),
        kappa3: p.rho2 * (-s[0] + s[1] - s[2] + s[3]),
    }
}

/// Position, velocity, attitude `(roll, pitch, yaw)` and attitude rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Vec3,
    pub rates: Vec3,
}

impl RigidState {
    pub fn at_rest(position: Vec3, roll: f64, pitch: f64) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            attitude: Vec3::new(roll, pitch, 0.0),
            rates: Vec3::zeros(),
        }
    }

    fn axpy(&self, h: f64, d: &RigidState) -> RigidState {
        RigidState {
            position: self.position + d.position * h,
            velocity: self.velocity + d.velocity * h,
            attitude: self.attitude + d.attitude * h,
            rates: self.rates + d.rates * h,
        }
    }

    fn wrapped(mut self) -> Self {
        self.attitude = self.attitude.map(wrap_angle);
        self
    }
}

/// Unit thrust direction in the world frame for the given attitude.
pub fn thrust_direction(roll: f64, pitch: f64, yaw: f64) -> Vec3 {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Vec3::new(cr * sp * cy + sr * sy, cr * sp * sy + sr * cy, cr * cp)
}

/// Time derivative of the state; the `position` slot carries velocity and
/// so on down the chain.
pub fn derivatives(s: &RigidState, v: &RotorSpeeds, wind: &Vec3, p: &DronePhysParams) -> RigidState {
    let w = mixer(v, p);
    let u = thrust_direction(s.attitude.x, s.attitude.y, s.attitude.z);
    let accel = u * (w.thrust / p.mass) + wind / p.mass - Vec3::new(0.0, 0.0, p.g);
    RigidState {
        position: s.velocity,
        velocity: accel,
        attitude: s.rates,
        rates: Vec3::new(w.kappa2 / p.ix, w.kappa1 / p.iy, w.kappa3 / p.iz),
    }
}

/// A constant rotor command over `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorSegment {
    pub stage: u8,
    pub t_start: f64,
    pub t_end: f64,
    pub speeds: RotorSpeeds,
}

impl RotorSegment {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: RigidState,
    pub speeds: RotorSpeeds,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&RigidState> {
        self.samples.last().map(|s| &s.state)
    }

    /// State at the first sample with time `>= t` (samples land exactly on
    /// segment boundaries).
    pub fn state_at(&self, t: f64) -> Option<&RigidState> {
        self.samples
            .iter()
            .find(|s| s.t >= t - 1e-12 * (1.0 + t.abs()))
            .map(|s| &s.state)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t", "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw", "v1", "v2", "v3", "v4",
        ])?;
        for s in &self.samples {
            let st = &s.state;
            let mut rec = vec![format!("{:.6}", s.t)];
            for v in st.position.iter().chain(st.velocity.iter()).chain(st.attitude.iter()) {
                rec.push(format!("{:.9}", v));
            }
            for v in s.speeds.0 {
                rec.push(format!("{:.6}", v));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const DEFAULT_DT: f64 = 1e-3;
const DIVERGENCE_RADIUS: f64 = 1e6;

/// Fixed-step RK4 over a rotor schedule, stepping exactly onto every
/// segment boundary. Samples are recorded after every step.
pub fn integrate(
    s0: &RigidState,
    segments: &[RotorSegment],
    wind: &Vec3,
    p: &DronePhysParams,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput("time step must be positive".into()));
    }
    p.validate()?;
    let t0 = segments.first().map_or(0.0, |s| s.t_start);
    let mut state = *s0;
    let mut t = t0;
    let mut samples = vec![TrajectorySample {
        t,
        state,
        speeds: segments.first().map_or(RotorSpeeds::uniform(0.0), |s| s.speeds),
    }];
    for seg in segments {
        seg.speeds.check(p.v_max)?;
        let len = seg.duration();
        if len < 0.0 {
            return Err(Error::InvalidInput("segment ends before it starts".into()));
        }
        if len == 0.0 {
            continue;
        }
        let n = (len / dt).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for i in 0..n {
            state = rk4_step(&state, &seg.speeds, wind, p, h);
            t = if i + 1 == n { seg.t_end } else { seg.t_start + (i + 1) as f64 * h };
            if !state.position.iter().all(|c| c.is_finite()) || state.position.norm() > DIVERGENCE_RADIUS {
                return Err(Error::UnstableTrajectory { time: t });
            }
            samples.push(TrajectorySample {
                t,
                state,
                speeds: seg.speeds,
            });
        }
    }
    Ok(Trajectory { samples })
}

fn rk4_step(s: &RigidState, v: &RotorSpeeds, wind: &Vec3, p: &DronePhysParams, h: f64) -> RigidState {
    let k1 = derivatives(s, v, wind, p);
    let k2 = derivatives(&s.axpy(0.5 * h, &k1), v, wind, p);
    let k3 = derivatives(&s.axpy(0.5 * h, &k2), v, wind, p);
    let k4 = derivatives(&s.axpy(h, &k3), v, wind, p);
    RigidState {
        position: s.position + (k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position) * (h / 6.0),
        velocity: s.velocity + (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity) * (h / 6.0),
        attitude: s.attitude + (k1.attitude + 2.0 * k2.attitude + 2.0 * k3.attitude + k4.attitude) * (h / 6.0),
        rates: s.rates + (k1.rates + 2.0 * k2.rates + 2.0 * k3.rates + k4.rates) * (h / 6.0),
    }
    .wrapped()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn equal_speeds_give_pure_thrust() {
        let p = DronePhysParams::default();
        let w = mixer(&RotorSpeeds::uniform(100.0), &p);
        assert_relative_eq!(w.thrust, 4.0 * p.rho1 * 1e4);
        assert_eq!((w.kappa1, w.kappa2, w.kappa3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn opposite_pair_cancels_pitch_torque() {
        let p = DronePhysParams::default();
        let v = 150.0;
        let w = mixer(&RotorSpeeds([0.0, v, 0.0, v]), &p);
        assert_eq!(w.kappa1, 0.0);
        assert_relative_eq!(w.kappa3, 2.0 * p.rho2 * v * v);
    }

    #[test]
    fn table_hover_speed_balances_weight() {
        let p = DronePhysParams::default();
        let w = mixer(&RotorSpeeds::uniform(205.6), &p);
        assert_relative_eq!(w.thrust, p.mass * p.g, max_relative = 1e-3);
    }

    #[test]
    fn hover_has_zero_acceleration() {
        let p = DronePhysParams::default();
        let v = (p.mass * p.g / (4.0 * p.rho1)).sqrt();
        let s = RigidState::at_rest(Vec3::zeros(), 0.0, 0.0);
        let d = derivatives(&s, &RotorSpeeds::uniform(v), &Vec3::zeros(), &p);
        assert!(d.velocity.norm() < 1e-12);
        assert_eq!(d.rates, Vec3::zeros());
    }

    #[test]
    fn quarter_pitch_thrust_points_along_x() {
        let p = DronePhysParams::default();
        let v = 200.0;
        let t = 4.0 * p.rho1 * v * v;
        let s = RigidState::at_rest(Vec3::zeros(), 0.0, PI / 2.0);
        let d = derivatives(&s, &RotorSpeeds::uniform(v), &Vec3::zeros(), &p);
        assert_relative_eq!(d.velocity.x, t / p.mass, max_relative = 1e-12);
        assert_relative_eq!(d.velocity.z, -p.g, max_relative = 1e-12);
    }

    #[test]
    fn free_fall_matches_closed_form() {
        let p = DronePhysParams::default();
        let s0 = RigidState {
            velocity: Vec3::new(1.5, -0.5, 0.0),
            ..RigidState::at_rest(Vec3::new(0.0, 0.0, 100.0), 0.0, 0.0)
        };
        let seg = [RotorSegment {
            stage: 0,
            t_start: 0.0,
            t_end: 3.0,
            speeds: RotorSpeeds::uniform(0.0),
        }];
        let tr = integrate(&s0, &seg, &Vec3::zeros(), &p, 1e-3).unwrap();
        let f = tr.final_state().unwrap();
        assert_relative_eq!(f.position.z, 100.0 - 0.5 * p.g * 9.0, max_relative = 1e-12);
        assert_eq!(f.velocity.x, 1.5);
        assert_eq!(f.velocity.y, -0.5);
    }

    #[test]
    fn rejects_speeds_above_limit() {
        let p = DronePhysParams::default();
        let seg = [RotorSegment {
            stage: 0,
            t_start: 0.0,
            t_end: 1.0,
            speeds: RotorSpeeds::uniform(p.v_max * 1.01),
        }];
        let s0 = RigidState::at_rest(Vec3::zeros(), 0.0, 0.0);
        assert!(integrate(&s0, &seg, &Vec3::zeros(), &p, 1e-3).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let p = DronePhysParams::default();
        let seg = [RotorSegment {
            stage: 0,
            t_start: 0.0,
            t_end: 1.0,
            speeds: RotorSpeeds::uniform(0.0),
        }];
        let s0 = RigidState {
            velocity: Vec3::new(5e6, 0.0, 0.0),
            ..RigidState::at_rest(Vec3::zeros(), 0.0, 0.0)
        };
        assert!(matches!(
            integrate(&s0, &seg, &Vec3::zeros(), &p, 1e-3),
            Err(Error::UnstableTrajectory { .. })
        ));
    }
}
