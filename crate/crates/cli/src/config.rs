//! Flat `key = value` run configuration.
//!
//! Lines are `namespace.key = value`; `#` starts a comment. Vectors are
//! written `x, y, z`, lists of numbers `a, b, c`, lists of vectors
//! `x, y, z; x, y, z`. Every key is optional and unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;

use drone_array::control::PlanMode;
use drone_array::placement::ArrayPose;
use drone_array::quadrature::QuadratureSpec;
use drone_array::sim::{free_space_coeff, ArrayPower, BaselineMode, ServiceOrder, SimConfig, SweepParam};
use drone_array::spacing_opt::PeakMode;
use drone_array::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Res<T> {
    Err(ConfigError(msg.into()))
}

/// What to sweep: a scenario parameter or the hover-speed curve.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepTarget {
    Scenario(SweepParam),
    HoverSpeed,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub plan_mode: PlanMode,
    pub hold_time: f64,
    pub max_newton_iters: usize,
    pub plan_start: Vec3,
    pub plan_goal: Vec3,
    pub integration_dt: f64,
    pub user_position: Option<Vec3>,
    pub sweep_target: SweepTarget,
    pub sweep_values: Vec<f64>,
    pub sweep_repetitions: usize,
    pub hover_directions: Vec<Vec3>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            plan_mode: PlanMode::DriftCompensated,
            hold_time: 1.0,
            max_newton_iters: 60,
            plan_start: Vec3::new(0.0, 0.0, 100.0),
            plan_goal: Vec3::new(100.0, 0.0, 100.0),
            integration_dt: 1e-3,
            user_position: None,
            sweep_target: SweepTarget::Scenario(SweepParam::Bandwidth),
            sweep_values: vec![1e6, 2e6, 5e6, 1e7],
            sweep_repetitions: 10,
            hover_directions: vec![Vec3::new(1.0, 1.0, 1.0), Vec3::x()],
        }
    }
}

/// Key/value pairs with their line numbers, in file order of first use.
#[derive(Debug, Default)]
struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn parse(text: &str, into: &mut Entries) -> Res<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected 'key = value'", i + 1));
            };
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return err(format!("line {}: bad key '{k}'", i + 1));
            }
            into.0.insert(k.to_string(), (i + 1, v.trim().to_string()));
        }
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.0.remove(key)
    }

    fn num(&mut self, key: &str, slot: &mut f64) -> Res<()> {
        if let Some((line, v)) = self.take(key) {
            *slot = parse_f64(&v).map_err(|e| at(line, key, e))?;
        }
        Ok(())
    }

    fn count(&mut self, key: &str, slot: &mut usize) -> Res<()> {
        if let Some((line, v)) = self.take(key) {
            *slot = v
                .parse()
                .map_err(|_| at(line, key, format!("'{v}' is not a non-negative integer")))?;
        }
        Ok(())
    }

    fn vec3(&mut self, key: &str, slot: &mut Vec3) -> Res<()> {
        if let Some((line, v)) = self.take(key) {
            *slot = parse_vec3(&v).map_err(|e| at(line, key, e))?;
        }
        Ok(())
    }

    fn list(&mut self, key: &str) -> Res<Option<Vec<f64>>> {
        match self.take(key) {
            Some((line, v)) => Ok(Some(parse_list(&v).map_err(|e| at(line, key, e))?)),
            None => Ok(None),
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, slot: &mut T, options: &[(&str, T)]) -> Res<()> {
        if let Some((line, v)) = self.take(key) {
            match options.iter().find(|(n, _)| *n == v) {
                Some((_, t)) => *slot = *t,
                None => {
                    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    return Err(at(line, key, format!("'{v}' is not one of {}", names.join(", "))));
                }
            }
        }
        Ok(())
    }
}

fn at(line: usize, key: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("line {line}: {key}: {msg}"))
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("'{v}' is not finite"))
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|s| parse_f64(s.trim())).collect()
}

fn parse_vec3(v: &str) -> Result<Vec3, String> {
    let xs = parse_list(v)?;
    if xs.len() != 3 {
        return Err(format!("expected three components, got {}", xs.len()));
    }
    Ok(Vec3::new(xs[0], xs[1], xs[2]))
}

impl RunConfig {
    /// Parses the concatenation of `texts` (later texts override earlier keys).
    pub fn parse(texts: &[&str]) -> Res<Self> {
        let mut e = Entries::default();
        for t in texts {
            Entries::parse(t, &mut e)?;
        }
        let mut c = RunConfig::default();
        let s = &mut c.sim;

        if let Some((line, v)) = e.take("scenario.seed") {
            s.seed = v.parse().map_err(|_| at(line, "scenario.seed", "not an unsigned integer"))?;
        }
        e.count("scenario.users", &mut s.user_count)?;
        e.num("scenario.region_m", &mut s.region_size)?;
        e.num("scenario.load_bits", &mut s.load_bits)?;
        e.vec3("scenario.wind_n", &mut s.wind)?;
        e.choice(
            "scenario.service_order",
            &mut s.order,
            &[("input", ServiceOrder::Input), ("nearest_angle", ServiceOrder::NearestAngle)],
        )?;
        e.choice(
            "scenario.baseline_mode",
            &mut s.baseline_mode,
            &[("sum", BaselineMode::Sum), ("parallel", BaselineMode::Parallel)],
        )?;
        e.choice(
            "scenario.plan_mode",
            &mut s.plan_mode,
            &[("decomposed", PlanMode::Decomposed), ("drift_compensated", PlanMode::DriftCompensated)],
        )?;

        e.count("array.drones", &mut s.drone_count)?;
        e.num("array.amplitude", &mut s.amplitude)?;
        if let Some((line, v)) = e.take("array.phase_step_rad") {
            s.phase_step = Some(parse_f64(&v).map_err(|m| at(line, "array.phase_step_rad", m))?);
        }
        e.num("array.efficiency", &mut s.efficiency)?;
        e.num("array.d_min_m", &mut s.d_min)?;
        s.initial_spacing = e.list("array.initial_spacing_m")?;
        let mut pose = ArrayPose::default();
        e.vec3("array.origin_m", &mut pose.origin)?;
        e.num("array.alpha_rad", &mut pose.alpha)?;
        e.num("array.gamma_rad", &mut pose.gamma)?;
        s.pose = pose;

        e.num("optimizer.cap_wavelengths", &mut s.optimizer.cap_wavelengths)?;
        e.num("optimizer.rel_tol", &mut s.optimizer.rel_tol)?;
        e.count("optimizer.max_outer_iters", &mut s.optimizer.max_outer_iters)?;
        e.count("optimizer.max_backtracks", &mut s.optimizer.max_backtracks)?;
        e.choice(
            "optimizer.peak_mode",
            &mut s.optimizer.peak_mode,
            &[("refresh", PeakMode::Refresh), ("frozen", PeakMode::Frozen)],
        )?;

        let mut q = QuadratureSpec::default();
        e.count("quadrature.n_theta", &mut q.n_theta)?;
        e.count("quadrature.n_phi", &mut q.n_phi)?;
        s.quad = q;

        let l = &mut s.link;
        e.num("link.bandwidth_hz", &mut l.bandwidth)?;
        e.num("link.tx_power_w", &mut l.tx_power)?;
        e.num("link.noise_density_w_per_hz", &mut l.noise_density)?;
        e.num("link.path_loss_exp", &mut l.path_loss_exp)?;
        e.num("link.carrier_hz", &mut l.carrier_hz)?;
        l.path_loss_coeff = free_space_coeff(l.carrier_hz);
        e.num("link.path_loss_coeff", &mut l.path_loss_coeff)?;
        e.choice(
            "link.array_power",
            &mut l.array_power,
            &[("sum_of_drones", ArrayPower::SumOfDrones), ("fixed", ArrayPower::Fixed)],
        )?;

        let d = &mut s.drone;
        e.num("drone.mass_kg", &mut d.mass)?;
        e.num("drone.arm_m", &mut d.arm)?;
        e.num("drone.rho1", &mut d.rho1)?;
        e.num("drone.rho2", &mut d.rho2)?;
        e.num("drone.ix", &mut d.ix)?;
        e.num("drone.iy", &mut d.iy)?;
        e.num("drone.iz", &mut d.iz)?;
        e.num("drone.v_max_rad_s", &mut d.v_max)?;
        e.num("drone.g", &mut d.g)?;

        e.choice(
            "plan.mode",
            &mut c.plan_mode,
            &[("decomposed", PlanMode::Decomposed), ("drift_compensated", PlanMode::DriftCompensated)],
        )?;
        e.num("plan.hold_time_s", &mut c.hold_time)?;
        e.count("plan.max_newton_iters", &mut c.max_newton_iters)?;
        e.vec3("plan.start_m", &mut c.plan_start)?;
        e.vec3("plan.goal_m", &mut c.plan_goal)?;
        e.num("plan.dt_s", &mut c.integration_dt)?;

        if let Some((line, v)) = e.take("user.position_m") {
            c.user_position = Some(parse_vec3(&v).map_err(|m| at(line, "user.position_m", m))?);
        }

        if let Some((line, v)) = e.take("sweep.param") {
            c.sweep_target = if v == "hover_speed" {
                SweepTarget::HoverSpeed
            } else {
                SweepTarget::Scenario(SweepParam::parse(&v).map_err(|m| at(line, "sweep.param", m))?)
            };
        }
        if let Some(v) = e.list("sweep.values")? {
            c.sweep_values = v;
        }
        e.count("sweep.repetitions", &mut c.sweep_repetitions)?;
        if let Some((line, v)) = e.take("hover.directions") {
            c.hover_directions = v
                .split(';')
                .map(|p| parse_vec3(p.trim()))
                .collect::<Result<_, _>>()
                .map_err(|m| at(line, "hover.directions", m))?;
        }

        if let Some((k, (line, _))) = e.0.iter().next() {
            return Err(at(*line, k, "unknown key"));
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Res<()> {
        if !(self.hold_time >= 0.0) {
            return err("plan.hold_time_s must be non-negative");
        }
        if !(self.integration_dt > 0.0) {
            return err("plan.dt_s must be positive");
        }
        if self.sweep_values.is_empty() || self.sweep_repetitions == 0 {
            return err("sweep needs values and at least one repetition");
        }
        if self.hover_directions.iter().any(|d| d.norm() == 0.0) {
            return err("hover directions must be non-zero");
        }
        Ok(())
    }
}

/// Bundled figure presets.
pub fn preset(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig4" => include_str!("../presets/fig4.conf"),
        "fig5" => include_str!("../presets/fig5.conf"),
        "fig6" => include_str!("../presets/fig6.conf"),
        "fig7" => include_str!("../presets/fig7.conf"),
        "fig8" => include_str!("../presets/fig8.conf"),
        _ => return None,
    })
}

pub const PRESETS: [&str; 5] = ["fig4", "fig5", "fig6", "fig7", "fig8"];
