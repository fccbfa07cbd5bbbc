//! Minimum-time maneuver planning for a single quadrotor.
//!
//! A maneuver is split into six stages: re-orient toward the goal, thrust at
//! full power, re-orient against the motion, brake at full power, return to
//! the hover attitude, then hover. Orientation changes are symmetric
//! bang-bang rotations, pitch first and roll second.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec3};
use crate::placement::MIN_SAFE_ALTITUDE;
use crate::quadrature::gauss_legendre;
use crate::quadrotor::{
    integrate, mixer, thrust_direction, DronePhysParams, RigidState, RotorSegment, RotorSpeeds,
};

/// Attitude with zero yaw and the net force it produces toward the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
    /// Magnitude of the net force along the target direction, N.
    pub force: f64,
}

/// Gravity plus wind.
pub fn external_force(wind: &Vec3, p: &DronePhysParams) -> Vec3 {
    wind + p.weight()
}

/// `(roll, pitch)` that points the thrust along the unit vector `u` (yaw 0).
pub fn attitude_for_direction(u: &Vec3) -> (f64, f64) {
    let roll = u.y.clamp(-1.0, 1.0).asin();
    let pitch = wrap_angle(u.x.atan2(u.z));
    (roll, pitch)
}

/// Attitude maximizing the acceleration toward `p_d` under the external
/// force `f_ext` with thrust magnitude `f`.
///
/// The thrust `F u` is chosen so that `f_ext + F u = A p̂_d` with the
/// largest `A`, i.e. `A = p̂·f_ext + sqrt((p̂·f_ext)² − |f_ext|² + F²)`.
pub fn max_accel_orientation(f_ext: &Vec3, p_d: &Vec3, f: f64) -> Result<Orientation> {
    if !(f > 0.0) {
        return Err(Error::InvalidInput("thrust magnitude must be positive".into()));
    }
    let dist = p_d.norm();
    if !(dist > 0.0) || !dist.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    let e = p_d / dist;
    let b = e.dot(f_ext);
    let disc = b * b - f_ext.norm_squared() + f * f;
    if disc < 0.0 {
        return Err(Error::CannotAlignThrust);
    }
    let a = b + disc.sqrt();
    if !(a > 0.0) {
        return Err(Error::InsufficientThrust);
    }
    let u = (e * a - f_ext) / f;
    let (roll, pitch) = attitude_for_direction(&(u / u.norm()));
    Ok(Orientation {
        pitch,
        roll,
        yaw: 0.0,
        force: a,
    })
}

/// Switching time `tau` and total time `T` of the rest-to-rest bang-bang
/// profile covering `d` with accelerations `a_max > 0 > a_min`.
pub fn bang_bang_times(d: f64, a_max: f64, a_min: f64) -> Result<(f64, f64)> {
    if !(d > 0.0) || !(a_max > 0.0) || !(a_min < 0.0) {
        return Err(Error::InvalidInput(
            "bang-bang profile needs d > 0 and a_max > 0 > a_min".into(),
        ));
    }
    let t = (2.0 * d * (1.0 / a_max - 1.0 / a_min)).sqrt();
    let tau = a_min / (a_min - a_max) * t;
    Ok((tau, t))
}

/// Rotor speed that balances `f_ext` at the matching hover attitude.
pub fn stable_hover_speed(f_ext: &Vec3, p: &DronePhysParams) -> Result<f64> {
    let v = (f_ext.norm() / (4.0 * p.rho1)).sqrt();
    if v > p.v_max {
        return Err(Error::WindExceedsAuthority {
            required: v,
            limit: p.v_max,
        });
    }
    Ok(v)
}

/// Hover attitude `(roll, pitch)` cancelling `f_ext`; level when `f_ext = 0`.
pub fn hover_attitude(f_ext: &Vec3) -> (f64, f64) {
    let n = f_ext.norm();
    if n == 0.0 {
        return (0.0, 0.0);
    }
    attitude_for_direction(&(-f_ext / n))
}

/// Duration of one single-axis bang-bang rotation by `d_psi` at full speed.
pub fn rotation_time(d_psi: f64, inertia: f64, p: &DronePhysParams) -> f64 {
    2.0 / p.v_max * (d_psi.abs() * inertia / (p.arm * p.rho1)).sqrt()
}

fn pitch_templates(sign: f64, v: f64) -> [RotorSpeeds; 2] {
    let h = v * FRAC_1_SQRT_2;
    let up = [RotorSpeeds([h, 0.0, h, v]), RotorSpeeds([h, v, h, 0.0])];
    if sign >= 0.0 {
        up
    } else {
        [up[1], up[0]]
    }
}

fn roll_templates(sign: f64, v: f64) -> [RotorSpeeds; 2] {
    let h = v * FRAC_1_SQRT_2;
    let up = [RotorSpeeds([0.0, h, v, h]), RotorSpeeds([v, h, 0.0, h])];
    if sign >= 0.0 {
        up
    } else {
        [up[1], up[0]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlanMode {
    /// Stage attitudes from the maximum-acceleration geometry and translation
    /// times from the rest-to-rest bang-bang profile; the motion during
    /// orientation stages is ignored.
    #[default]
    Decomposed,
    /// Same stage structure, with the two thrust attitudes and durations
    /// solved so the integrated motion ends at rest on the goal.
    DriftCompensated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanSettings {
    pub mode: PlanMode,
    /// Length of the trailing hover segment.
    pub hold_time: f64,
    pub max_newton_iters: usize,
}

impl Default for PlanSettings {
    fn default() -> Self {
        Self {
            mode: PlanMode::DriftCompensated,
            hold_time: 1.0,
            max_newton_iters: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverRequest {
    pub start: Vec3,
    pub goal: Vec3,
    /// Wind force in N.
    pub wind: Vec3,
    pub params: DronePhysParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlan {
    pub mode: PlanMode,
    /// Fourteen stage segments followed by the hover segment.
    pub segments: Vec<RotorSegment>,
    /// `tau_1 .. tau_14`.
    pub switching_times: Vec<f64>,
    pub total_time: f64,
    pub distance: f64,
    /// Net force toward the goal during stages 2 and 4 (signed).
    pub a_s2: f64,
    pub a_s4: f64,
    /// `(d_psi_p, d_psi_r)` for stages 1, 3 and 5.
    pub d_psi: [(f64, f64); 3],
    /// Durations of stages 2 and 4.
    pub thrust_times: (f64, f64),
    pub hover_speed: f64,
    pub start_attitude: (f64, f64),
    pub goal_below_min_altitude: bool,
    pub params: DronePhysParams,
    pub start: Vec3,
    pub goal: Vec3,
    pub wind: Vec3,
}

impl ControlPlan {
    pub fn initial_state(&self) -> RigidState {
        RigidState::at_rest(self.start, self.start_attitude.0, self.start_attitude.1)
    }

    /// Stage segments without the trailing hover.
    pub fn stage_segments(&self) -> &[RotorSegment] {
        &self.segments[..14]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "stage", "t_start", "t_end", "v1", "v2", "v3", "v4", "d_psi_p", "d_psi_r",
        ])?;
        for seg in &self.segments {
            let (dp, dr) = match seg.stage {
                1 => self.d_psi[0],
                3 => self.d_psi[1],
                5 => self.d_psi[2],
                _ => (0.0, 0.0),
            };
            let mut rec = vec![
                seg.stage.to_string(),
                format!("{:.9}", seg.t_start),
                format!("{:.9}", seg.t_end),
            ];
            rec.extend(seg.speeds.0.iter().map(|v| format!("{:.6}", v)));
            rec.push(format!("{:.9}", dp));
            rec.push(format!("{:.9}", dr));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Closed-form control time: translation term plus the six orientation terms.
pub fn total_control_time(plan: &ControlPlan) -> f64 {
    let p = &plan.params;
    let orient: f64 = plan
        .d_psi
        .iter()
        .map(|&(dp, dr)| rotation_time(dp, p.iy, p) + rotation_time(dr, p.ix, p))
        .sum();
    if plan.distance == 0.0 {
        return orient;
    }
    (2.0 * plan.distance * (p.mass / plan.a_s2 - p.mass / plan.a_s4)).sqrt() + orient
}

#[derive(Clone, Copy)]
struct StageLayout {
    start: (f64, f64),
    thrust2: (f64, f64),
    thrust4: (f64, f64),
    end: (f64, f64),
    t2: f64,
    t4: f64,
    /// Pitch turns are taken within π of these, keeping the shooting
    /// residual continuous when a thrust attitude crosses pitch ±π.
    pitch_branch: [f64; 3],
}

fn d_angles(from: (f64, f64), to: (f64, f64), branch: f64) -> (f64, f64) {
    (branch + wrap_angle(to.1 - from.1 - branch), to.0 - from.0)
}

fn orientation_segments(
    stage: u8,
    d_psi: (f64, f64),
    p: &DronePhysParams,
    t: &mut f64,
    segs: &mut Vec<RotorSegment>,
) {
    let v = p.v_max;
    let (dp, dr) = d_psi;
    let tp = 0.5 * rotation_time(dp, p.iy, p);
    let tr = 0.5 * rotation_time(dr, p.ix, p);
    let pt = pitch_templates(dp, v);
    let rt = roll_templates(dr, v);
    for (speeds, len) in [(pt[0], tp), (pt[1], tp), (rt[0], tr), (rt[1], tr)] {
        segs.push(RotorSegment {
            stage,
            t_start: *t,
            t_end: *t + len,
            speeds,
        });
        *t += len;
    }
}

fn build_segments(
    layout: &StageLayout,
    p: &DronePhysParams,
    hover_speed: f64,
    hold: f64,
) -> (Vec<RotorSegment>, [(f64, f64); 3]) {
    let [b1, b3, b5] = layout.pitch_branch;
    let d1 = d_angles(layout.start, layout.thrust2, b1);
    let d3 = d_angles(layout.thrust2, layout.thrust4, b3);
    let d5 = d_angles(layout.thrust4, layout.end, b5);
    let mut segs = Vec::with_capacity(15);
    let mut t = 0.0;
    orientation_segments(1, d1, p, &mut t, &mut segs);
    segs.push(RotorSegment {
        stage: 2,
        t_start: t,
        t_end: t + layout.t2,
        speeds: RotorSpeeds::uniform(p.v_max),
    });
    t += layout.t2;
    orientation_segments(3, d3, p, &mut t, &mut segs);
    segs.push(RotorSegment {
        stage: 4,
        t_start: t,
        t_end: t + layout.t4,
        speeds: RotorSpeeds::uniform(p.v_max),
    });
    t += layout.t4;
    orientation_segments(5, d5, p, &mut t, &mut segs);
    segs.push(RotorSegment {
        stage: 6,
        t_start: t,
        t_end: t + hold,
        speeds: RotorSpeeds::uniform(hover_speed),
    });
    (segs, [d1, d3, d5])
}

/// Plans the six-stage maneuver from rest at `req.start` to rest at `req.goal`.
pub fn plan_maneuver(req: &ManeuverRequest, settings: &PlanSettings) -> Result<ControlPlan> {
    let p = &req.params;
    p.validate()?;
    if !(settings.hold_time >= 0.0) {
        return Err(Error::InvalidInput("hold time must be non-negative".into()));
    }
    if !req.start.iter().chain(req.goal.iter()).chain(req.wind.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("maneuver endpoints and wind must be finite".into()));
    }
    let f_ext = external_force(&req.wind, p);
    let hover_speed = stable_hover_speed(&f_ext, p)?;
    let hover = hover_attitude(&f_ext);
    let disp = req.goal - req.start;
    let distance = disp.norm();
    let below = req.goal.z < MIN_SAFE_ALTITUDE;

    if distance < 1e-9 {
        let layout = StageLayout {
            start: hover,
            thrust2: hover,
            thrust4: hover,
            end: hover,
            t2: 0.0,
            t4: 0.0,
            pitch_branch: [0.0; 3],
        };
        let (segments, d_psi) = build_segments(&layout, p, hover_speed, settings.hold_time);
        return Ok(assemble(req, settings.mode, segments, d_psi, 0.0, (0.0, 0.0), (0.0, 0.0), hover_speed, hover, below));
    }

    let f = p.max_thrust();
    let o2 = max_accel_orientation(&f_ext, &disp, f)?;
    let o4 = max_accel_orientation(&f_ext, &(-disp), f)?;
    let (a_s2, a_s4) = (o2.force, -o4.force);
    let (tau, t_total) = bang_bang_times(distance, a_s2 / p.mass, a_s4 / p.mass)?;
    let mut layout = StageLayout {
        start: hover,
        thrust2: (o2.roll, o2.pitch),
        thrust4: (o4.roll, o4.pitch),
        end: hover,
        t2: tau,
        t4: t_total - tau,
        pitch_branch: [0.0; 3],
    };

    if settings.mode == PlanMode::DriftCompensated {
        // (π − roll, pitch + π) points the thrust the same way; those
        // representations give the shooting solve alternative starts.
        let flip = |(r, pt): (f64, f64)| (PI - r, wrap_angle(pt + PI));
        let starts = [(false, true), (true, false), (true, true)].map(|(f2, f4)| StageLayout {
            thrust2: if f2 { flip(layout.thrust2) } else { layout.thrust2 },
            thrust4: if f4 { flip(layout.thrust4) } else { layout.thrust4 },
            ..layout
        });
        let mut solved = compensate_drift(req, layout, hover_speed, settings.max_newton_iters);
        for start in starts {
            if solved.is_ok() {
                break;
            }
            if let Ok(l) = compensate_drift(req, start, hover_speed, settings.max_newton_iters) {
                solved = Ok(l);
            }
        }
        layout = solved?;
    }
    let (segments, d_psi) = build_segments(&layout, p, hover_speed, settings.hold_time);
    let e = disp / distance;
    let forces = if settings.mode == PlanMode::Decomposed {
        (a_s2, a_s4)
    } else {
        let along = |att: (f64, f64)| (thrust_direction(att.0, att.1, 0.0) * f + f_ext).dot(&e);
        (along(layout.thrust2), along(layout.thrust4))
    };
    Ok(assemble(
        req,
        settings.mode,
        segments,
        d_psi,
        distance,
        forces,
        (layout.t2, layout.t4),
        hover_speed,
        hover,
        below,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    req: &ManeuverRequest,
    mode: PlanMode,
    segments: Vec<RotorSegment>,
    d_psi: [(f64, f64); 3],
    distance: f64,
    forces: (f64, f64),
    thrust_times: (f64, f64),
    hover_speed: f64,
    hover: (f64, f64),
    below: bool,
) -> ControlPlan {
    let switching_times: Vec<f64> = segments[..14].iter().map(|s| s.t_end).collect();
    ControlPlan {
        mode,
        total_time: switching_times[13],
        switching_times,
        segments,
        distance,
        a_s2: forces.0,
        a_s4: forces.1,
        d_psi,
        thrust_times,
        hover_speed,
        start_attitude: hover,
        goal_below_min_altitude: below,
        params: req.params,
        start: req.start,
        goal: req.goal,
        wind: req.wind,
    }
}

/// Propagates a rotor schedule with Gauss-Legendre quadrature in time.
///
/// Within a segment the angular accelerations are constant, so the attitude
/// is an exact quadratic in time; only the translational integral is
/// approximated.
pub fn propagate(s0: &RigidState, segments: &[RotorSegment], wind: &Vec3, p: &DronePhysParams) -> RigidState {
    let (nodes, weights) = gauss_legendre(24);
    let mut s = *s0;
    for seg in segments {
        let h = seg.duration();
        if h <= 0.0 {
            continue;
        }
        let w = mixer(&seg.speeds, p);
        let alpha = Vec3::new(w.kappa2 / p.ix, w.kappa1 / p.iy, w.kappa3 / p.iz);
        let accel = |t: f64| {
            let att = s.attitude + s.rates * t + alpha * (0.5 * t * t);
            thrust_direction(att.x, att.y, att.z) * (w.thrust / p.mass) + wind / p.mass
                - Vec3::new(0.0, 0.0, p.g)
        };
        let mut dv = Vec3::zeros();
        let mut dp = Vec3::zeros();
        for (x, wt) in nodes.iter().zip(&weights) {
            let t = 0.5 * h * (x + 1.0);
            let a = accel(t);
            dv += a * (0.5 * h * wt);
            dp += a * (0.5 * h * wt * (h - t));
        }
        s = RigidState {
            position: s.position + s.velocity * h + dp,
            velocity: s.velocity + dv,
            attitude: s.attitude + s.rates * h + alpha * (0.5 * h * h),
            rates: s.rates + alpha * h,
        };
    }
    s
}

type V6 = SVector<f64, 6>;

fn compensate_drift(
    req: &ManeuverRequest,
    init: StageLayout,
    hover_speed: f64,
    max_iters: usize,
) -> Result<StageLayout> {
    let p = &req.params;
    let distance = (req.goal - req.start).norm();
    let accel_scale = p.max_thrust() / p.mass;
    let len_scale = distance.max(1.0);
    let vel_scale = (len_scale * accel_scale).sqrt();
    let s0 = RigidState::at_rest(req.start, init.start.0, init.start.1);

    let (_, [d1, d3, d5]) = build_segments(&init, p, hover_speed, 0.0);
    let layout_of = |x: &V6| StageLayout {
        start: init.start,
        thrust2: (x[1], x[0]),
        thrust4: (x[3], x[2]),
        end: init.end,
        t2: x[4],
        t4: x[5],
        pitch_branch: [d1.0, d3.0, d5.0],
    };
    let residual = |x: &V6| -> V6 {
        let (segs, _) = build_segments(&layout_of(x), p, hover_speed, 0.0);
        let end = propagate(&s0, &segs[..14], &req.wind, p);
        let dp = (end.position - req.goal) / len_scale;
        let dv = end.velocity / vel_scale;
        V6::new(dp.x, dp.y, dp.z, dv.x, dv.y, dv.z)
    };

    let mut x = V6::new(
        init.thrust2.1,
        init.thrust2.0,
        init.thrust4.1,
        init.thrust4.0,
        init.t2,
        init.t4,
    );
    let mut r = residual(&x);
    let tol = 1e-11;
    for _ in 0..max_iters {
        if r.amax() <= tol {
            break;
        }
        let mut jac = SMatrix::<f64, 6, 6>::zeros();
        for j in 0..6 {
            let h = 1e-6 * x[j].abs().max(1e-2);
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let col = (residual(&xp) - residual(&xm)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let mut improved = false;
        if let Some(step) = jac.lu().solve(&(-r)) {
            let mut lambda = 1.0;
            for _ in 0..30 {
                let cand = x + step * lambda;
                let rc = residual(&cand);
                if rc.norm() < r.norm() {
                    x = cand;
                    r = rc;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if !improved {
            // Newton direction stalled; fall back to damped least squares.
            let jtj = jac.transpose() * jac;
            let g = jac.transpose() * r;
            let mut mu = 1e-8 * jtj.diagonal().amax().max(1e-300);
            for _ in 0..40 {
                let damped = jtj + SMatrix::<f64, 6, 6>::identity() * mu;
                if let Some(step) = damped.cholesky().map(|c| c.solve(&(-g))) {
                    let cand = x + step;
                    let rc = residual(&cand);
                    if rc.norm() < r.norm() {
                        x = cand;
                        r = rc;
                        improved = true;
                        break;
                    }
                }
                mu *= 10.0;
            }
        }
        if !improved {
            break;
        }
    }
    if !(r.amax() <= 1e-8) {
        return Err(Error::PlanNotConverged(format!(
            "terminal residual {:.3e} after shooting",
            r.amax()
        )));
    }
    if x[4] < 0.0 || x[5] < 0.0 {
        return Err(Error::PlanNotConverged(
            "orientation drift exceeds the maneuver; thrust stages would need negative length"
                .into(),
        ));
    }
    Ok(layout_of(&x))
}

/// Forward-integration check of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closure {
    pub position_error: f64,
    /// Position error relative to the maneuver distance.
    pub relative_error: f64,
    pub terminal_speed: f64,
    pub peak_speed: f64,
}

/// Integrates the stage segments of `plan` with RK4 and measures how
/// close the drone ends to the goal.
pub fn verify_plan(plan: &ControlPlan, dt: f64) -> Result<Closure> {
    let tr = integrate(&plan.initial_state(), plan.stage_segments(), &plan.wind, &plan.params, dt)?;
    let end = tr.final_state().copied().unwrap_or_else(|| plan.initial_state());
    let peak_speed = tr
        .samples
        .iter()
        .map(|s| s.state.velocity.norm())
        .fold(0.0, f64::max);
    let position_error = (end.position - plan.goal).norm();
    Ok(Closure {
        position_error,
        relative_error: if plan.distance > 0.0 {
            position_error / plan.distance
        } else {
            position_error
        },
        terminal_speed: end.velocity.norm(),
        peak_speed,
    })
}
