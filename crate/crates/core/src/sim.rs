//! Service-time simulation: the repositioning array against a grid of
//! independent single-antenna drones.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::control::{plan_maneuver, ManeuverRequest, PlanMode, PlanSettings};
use crate::error::{Error, Result};
use crate::geometry::{SphDirection, Vec3};
use crate::pattern::{ArrayConfig, ElementPattern, SPEED_OF_LIGHT};
use crate::placement::{ArrayPlanner, ArrayPose, UserSite};
use crate::quadrature::QuadratureSpec;
use crate::quadrotor::DronePhysParams;
use crate::spacing_opt::OptimizerSettings;

/// How the array's transmit power relates to the per-drone power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrayPower {
    /// All drones radiate `P_t` each, so the array total is `M P_t`.
    #[default]
    SumOfDrones,
    /// The array as a whole radiates `P_t`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub bandwidth: f64,
    /// Transmit power of one drone, W.
    pub tx_power: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_density: f64,
    pub path_loss_coeff: f64,
    pub path_loss_exp: f64,
    pub carrier_hz: f64,
    pub array_power: ArrayPower,
}

impl Default for LinkParams {
    fn default() -> Self {
        let carrier_hz = 700e6;
        Self {
            bandwidth: 2e6,
            tx_power: 0.1,
            noise_density: 1e-19,
            path_loss_coeff: free_space_coeff(carrier_hz),
            path_loss_exp: 3.0,
            carrier_hz,
            array_power: ArrayPower::SumOfDrones,
        }
    }
}

/// `(c / (4 pi f_c))²`, the free-space loss at 1 m.
pub fn free_space_coeff(carrier_hz: f64) -> f64 {
    (SPEED_OF_LIGHT / (4.0 * PI * carrier_hz)).powi(2)
}

impl LinkParams {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.bandwidth,
            self.tx_power,
            self.noise_density,
            self.path_loss_coeff,
            self.path_loss_exp,
            self.carrier_hz,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("link parameters must be positive".into()));
        }
        Ok(())
    }

    /// Received power `r^-alpha P K_o G`.
    pub fn received_power(&self, gain: f64, r: f64, power: f64) -> f64 {
        r.powf(-self.path_loss_exp) * power * self.path_loss_coeff * gain
    }
}

/// Shannon rate `B log2(1 + P_r / (N_o B))` for a received power.
pub fn rate_from_received(received: f64, bandwidth: f64, noise_density: f64) -> f64 {
    bandwidth * (1.0 + received / (noise_density * bandwidth)).log2()
}

/// Rate toward a user at range `r` with antenna gain `gain` and transmit power `power`.
pub fn rate(gain: f64, r: f64, power: f64, link: &LinkParams) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput("range must be positive".into()));
    }
    Ok(rate_from_received(
        link.received_power(gain, r, power),
        link.bandwidth,
        link.noise_density,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ServiceOrder {
    #[default]
    Input,
    /// Repeatedly serve the user closest in angle to the current beam.
    NearestAngle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineMode {
    /// Service time is the sum of every drone's queue.
    #[default]
    Sum,
    /// Drones serve concurrently; service time is the longest queue.
    Parallel,
}

/// Everything needed to build and run one scenario.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub user_count: usize,
    /// Side of the square service region centered on the origin, m.
    pub region_size: f64,
    pub load_bits: f64,
    pub seed: u64,
    pub drone_count: usize,
    pub amplitude: f64,
    /// Adjacent phase difference; `None` uses `pi / (5 (M - 1))`.
    pub phase_step: Option<f64>,
    pub efficiency: f64,
    pub pattern: ElementPattern,
    pub pose: ArrayPose,
    pub d_min: f64,
    /// Starting half-array spacing; `None` uses the half-wave default.
    pub initial_spacing: Option<Vec<f64>>,
    pub optimizer: OptimizerSettings,
    pub quad: QuadratureSpec,
    /// Wind force, N.
    pub wind: Vec3,
    pub link: LinkParams,
    pub drone: DronePhysParams,
    pub plan_mode: PlanMode,
    pub order: ServiceOrder,
    pub baseline_mode: BaselineMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            user_count: 100,
            region_size: 1000.0,
            load_bits: 1e8,
            seed: 1,
            drone_count: 10,
            amplitude: 1.0,
            phase_step: None,
            efficiency: 1.0,
            pattern: ElementPattern::Isotropic,
            pose: ArrayPose::default(),
            d_min: 0.2,
            initial_spacing: None,
            // Steps are capped per iteration, so larger arrays need more of them.
            optimizer: OptimizerSettings {
                max_outer_iters: 200,
                ..OptimizerSettings::default()
            },
            quad: QuadratureSpec::default(),
            wind: Vec3::zeros(),
            link: LinkParams::default(),
            drone: DronePhysParams::default(),
            plan_mode: PlanMode::Decomposed,
            order: ServiceOrder::Input,
            baseline_mode: BaselineMode::Sum,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.drone_count < 2 || self.drone_count % 2 != 0 {
            return Err(Error::InvalidInput("M must be even".into()));
        }
        if !(self.region_size > 0.0) || !(self.load_bits > 0.0) || !(self.d_min > 0.0) {
            return Err(Error::InvalidInput(
                "region size, user load and D_min must be positive".into(),
            ));
        }
        if !(self.amplitude > 0.0) || !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidInput(
                "amplitude must be positive and efficiency in [0, 1]".into(),
            ));
        }
        if !self.wind.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("wind must be finite".into()));
        }
        self.link.validate()?;
        self.drone.validate()?;
        self.optimizer.validate()?;
        self.quad.validate()
    }

    pub fn array_config(&self) -> Result<ArrayConfig> {
        let m = self.drone_count;
        let step = self
            .phase_step
            .unwrap_or_else(|| ArrayConfig::reference_phase_step(m));
        let lambda = self.link.wavelength();
        let mut cfg = ArrayConfig::uniform(m, lambda, 0.5 * lambda, step)?;
        cfg.a = vec![self.amplitude; m / 2];
        cfg.efficiency = self.efficiency;
        Ok(cfg)
    }

    /// Optimizes the spacing for this configuration.
    pub fn planner(&self) -> Result<ArrayPlanner> {
        self.validate()?;
        let cfg = self.array_config()?;
        match &self.initial_spacing {
            Some(d) => ArrayPlanner::from_initial(
                &cfg,
                self.pattern.clone(),
                self.pose,
                d,
                self.d_min,
                &self.optimizer,
                self.quad,
            ),
            None => ArrayPlanner::new(&cfg, self.pattern.clone(), self.pose, self.d_min, &self.optimizer, self.quad),
        }
    }

    /// Users drawn uniformly over the region at ground level.
    pub fn users(&self) -> Vec<UserSite> {
        generate_users(self.user_count, self.region_size, self.load_bits, self.seed)
    }

    /// Total transmit power of the array.
    pub fn array_tx_power(&self) -> f64 {
        match self.link.array_power {
            ArrayPower::SumOfDrones => self.drone_count as f64 * self.link.tx_power,
            ArrayPower::Fixed => self.link.tx_power,
        }
    }
}

pub fn generate_users(count: usize, region: f64, load_bits: f64, seed: u64) -> Vec<UserSite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 * region;
    (0..count)
        .map(|_| {
            let x = rng.gen_range(-half..half);
            let y = rng.gen_range(-half..half);
            UserSite {
                position: Vec3::new(x, y, 0.0),
                load_bits,
            }
        })
        .collect()
}

/// Outcome for one served user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserOutcome {
    /// Index into the input user list.
    pub user: usize,
    /// Serving drone (baseline) or 0 (array).
    pub server: usize,
    pub distance: f64,
    pub gain: f64,
    pub received_power: f64,
    pub rate: f64,
    pub transmission_time: f64,
    pub control_time: f64,
    pub load_bits: f64,
    pub below_min_altitude: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    /// Outcomes in service order.
    pub users: Vec<UserOutcome>,
    pub total_service: f64,
    pub total_transmission: f64,
    pub total_control: f64,
    /// Set for baselines: how queues combine.
    pub baseline_mode: Option<BaselineMode>,
    pub noise_density: f64,
    pub bandwidth: f64,
}

impl ScenarioResult {
    fn from_users(
        users: Vec<UserOutcome>,
        baseline_mode: Option<BaselineMode>,
        link: &LinkParams,
    ) -> Self {
        let mut r = ScenarioResult {
            users,
            total_service: 0.0,
            total_transmission: 0.0,
            total_control: 0.0,
            baseline_mode,
            noise_density: link.noise_density,
            bandwidth: link.bandwidth,
        };
        r.update_totals();
        r
    }

    fn update_totals(&mut self) {
        self.total_transmission = self.users.iter().map(|u| u.transmission_time).sum();
        self.total_control = self.users.iter().map(|u| u.control_time).sum();
        self.total_service = match self.baseline_mode {
            None | Some(BaselineMode::Sum) => self
                .users
                .iter()
                .map(|u| u.transmission_time + u.control_time)
                .sum(),
            Some(BaselineMode::Parallel) => {
                let mut queues: BTreeMap<usize, f64> = BTreeMap::new();
                for u in &self.users {
                    *queues.entry(u.server).or_insert(0.0) += u.transmission_time + u.control_time;
                }
                queues.values().copied().fold(0.0, f64::max)
            }
        };
    }

    /// Same scenario re-evaluated at another bandwidth (positions, gains and
    /// control times are bandwidth independent).
    pub fn at_bandwidth(&self, bandwidth: f64) -> ScenarioResult {
        let mut r = self.clone();
        r.bandwidth = bandwidth;
        for u in &mut r.users {
            u.rate = rate_from_received(u.received_power, bandwidth, r.noise_density);
            u.transmission_time = u.load_bits / u.rate;
        }
        r.update_totals();
        r
    }

    pub fn mean_rate(&self) -> f64 {
        mean(self.users.iter().map(|u| u.rate))
    }

    pub fn mean_gain(&self) -> f64 {
        mean(self.users.iter().map(|u| u.gain))
    }

    pub fn altitude_violations(&self) -> usize {
        self.users.iter().filter(|u| u.below_min_altitude).count()
    }

    /// Per-user rows in service order followed by one `total` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "row",
            "user_index",
            "distance_m",
            "gain",
            "rate_bps",
            "transmission_s",
            "control_s",
            "service_s",
        ])?;
        for (i, u) in self.users.iter().enumerate() {
            w.write_record([
                i.to_string(),
                u.user.to_string(),
                fmt(u.distance),
                fmt(u.gain),
                fmt(u.rate),
                fmt(u.transmission_time),
                fmt(u.control_time),
                fmt(u.transmission_time + u.control_time),
            ])?;
        }
        w.write_record([
            "total".to_string(),
            String::new(),
            String::new(),
            fmt(self.mean_gain()),
            fmt(self.mean_rate()),
            fmt(self.total_transmission),
            fmt(self.total_control),
            fmt(self.total_service),
        ])?;
        w.flush()?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{}", v)
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Orders users for service.
pub fn service_order(users: &[UserSite], origin: &Vec3, start: &Vec3, order: ServiceOrder) -> Vec<usize> {
    match order {
        ServiceOrder::Input => (0..users.len()).collect(),
        ServiceOrder::NearestAngle => {
            let dirs: Vec<Vec3> = users
                .iter()
                .map(|u| {
                    let v = u.position - origin;
                    let n = v.norm();
                    if n > 0.0 {
                        v / n
                    } else {
                        Vec3::zeros()
                    }
                })
                .collect();
            let mut left: Vec<usize> = (0..users.len()).collect();
            let mut cur = *start;
            let mut out = Vec::with_capacity(users.len());
            while !left.is_empty() {
                let (k, _) = left
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| (k, dirs[i].dot(&cur)))
                    .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
                let i = left.remove(k);
                cur = dirs[i];
                out.push(i);
            }
            out
        }
    }
}

/// Serves `users` one after another with the repositioning array.
pub fn run_array_scenario(cfg: &SimConfig, planner: &ArrayPlanner, users: &[UserSite]) -> Result<ScenarioResult> {
    cfg.validate()?;
    if planner.drone_count() != cfg.drone_count {
        return Err(Error::InvalidInput("planner was built for a different drone count".into()));
    }
    let plan_settings = PlanSettings {
        mode: cfg.plan_mode,
        hold_time: 0.0,
        ..PlanSettings::default()
    };
    let power = cfg.array_tx_power();
    let mut positions = planner.reference_positions()?;
    let start_dir = planner.pose.frame()? * planner.spacing.peak.unit_vector();
    let order = service_order(users, &planner.pose.origin, &start_dir, cfg.order);

    let mut out = Vec::with_capacity(users.len());
    for &i in &order {
        let user = &users[i];
        let placement = planner.plan_for_user(user)?;
        let mut control = 0.0f64;
        for (from, to) in positions.iter().zip(&placement.positions) {
            let plan = plan_maneuver(
                &ManeuverRequest {
                    start: *from,
                    goal: *to,
                    wind: cfg.wind,
                    params: cfg.drone,
                },
                &plan_settings,
            )?;
            control = control.max(plan.total_time);
        }
        let gain = placement.directivity * cfg.efficiency;
        let received = cfg.link.received_power(gain, placement.range, power);
        let r = rate_from_received(received, cfg.link.bandwidth, cfg.link.noise_density);
        out.push(UserOutcome {
            user: i,
            server: 0,
            distance: placement.range,
            gain,
            received_power: received,
            rate: r,
            transmission_time: user.load_bits / r,
            control_time: control,
            load_bits: user.load_bits,
            below_min_altitude: placement.below_min_altitude,
        });
        positions = placement.positions;
    }
    Ok(ScenarioResult::from_users(out, None, &cfg.link))
}

/// `(rows, cols)` with `rows * cols = m` and `|rows - cols|` minimal, `rows <= cols`.
pub fn grid_shape(m: usize) -> (usize, usize) {
    let mut best = (1, m);
    for r in 1..=m {
        if r * r > m {
            break;
        }
        if m % r == 0 {
            best = (r, m / r);
        }
    }
    best
}

/// Baseline drone positions: cell centers of a near-square grid over the region.
pub fn baseline_positions(m: usize, region: f64, altitude: f64) -> Vec<Vec3> {
    let (rows, cols) = grid_shape(m);
    let half = 0.5 * region;
    let mut out = Vec::with_capacity(m);
    for i in 0..rows {
        for j in 0..cols {
            out.push(Vec3::new(
                -half + (j as f64 + 0.5) * region / cols as f64,
                -half + (i as f64 + 0.5) * region / rows as f64,
                altitude,
            ));
        }
    }
    out
}

/// Independent single-antenna drones with nearest-drone association and
/// no control time.
pub fn run_multidrone_baseline(cfg: &SimConfig, users: &[UserSite]) -> Result<ScenarioResult> {
    cfg.validate()?;
    let drones = baseline_positions(cfg.drone_count, cfg.region_size, cfg.pose.origin.z);
    let gain = cfg.efficiency;
    let mut out = Vec::with_capacity(users.len());
    for (i, user) in users.iter().enumerate() {
        let (server, dist) = drones
            .iter()
            .enumerate()
            .map(|(k, d)| (k, (user.position - d).norm()))
            .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
        if !(dist > 0.0) {
            return Err(Error::DegenerateDirection);
        }
        let received = cfg.link.received_power(gain, dist, cfg.link.tx_power);
        let r = rate_from_received(received, cfg.link.bandwidth, cfg.link.noise_density);
        out.push(UserOutcome {
            user: i,
            server,
            distance: dist,
            gain,
            received_power: received,
            rate: r,
            transmission_time: user.load_bits / r,
            control_time: 0.0,
            load_bits: user.load_bits,
            below_min_altitude: false,
        });
    }
    Ok(ScenarioResult::from_users(out, Some(cfg.baseline_mode), &cfg.link))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Bandwidth,
    UserCount,
    DroneCount,
    VMax,
    WindMagnitude,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Bandwidth => "bandwidth",
            SweepParam::UserCount => "user_count",
            SweepParam::DroneCount => "drone_count",
            SweepParam::VMax => "v_max",
            SweepParam::WindMagnitude => "wind_magnitude",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "bandwidth" => SweepParam::Bandwidth,
            "user_count" => SweepParam::UserCount,
            "drone_count" => SweepParam::DroneCount,
            "v_max" => SweepParam::VMax,
            "wind_magnitude" => SweepParam::WindMagnitude,
            other => {
                return Err(Error::InvalidInput(format!("unknown sweep parameter '{other}'")))
            }
        })
    }

    /// Copy of `base` with the parameter set to `value`.
    pub fn apply(&self, base: &SimConfig, value: f64) -> Result<SimConfig> {
        let mut c = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidInput(format!("{} needs a whole number, got {v}", self.name())))
            }
        };
        match self {
            SweepParam::Bandwidth => c.link.bandwidth = value,
            SweepParam::UserCount => c.user_count = count(value)?,
            SweepParam::DroneCount => c.drone_count = count(value)?,
            SweepParam::VMax => c.drone.v_max = value,
            SweepParam::WindMagnitude => {
                let n = base.wind.norm();
                let dir = if n > 0.0 { base.wind / n } else { Vec3::x() };
                c.wind = dir * value;
            }
        }
        Ok(c)
    }
}

/// Seed of repetition `rep`: the same for every sweep value.
pub fn repetition_seed(base: u64, rep: usize) -> u64 {
    let mut z = base.wrapping_add(rep as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub repetition: usize,
    pub seed: u64,
    pub total_service: f64,
    pub total_transmission: f64,
    pub total_control: f64,
    pub mean_rate: f64,
    pub mean_gain: f64,
}

impl SweepRow {
    fn of(value: f64, repetition: usize, seed: u64, r: &ScenarioResult) -> Self {
        Self {
            value,
            repetition,
            seed,
            total_service: r.total_service,
            total_transmission: r.total_transmission,
            total_control: r.total_control,
            mean_rate: r.mean_rate(),
            mean_gain: r.mean_gain(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepStats {
    pub value: f64,
    pub mean: [f64; 5],
    pub std: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Mean and sample standard deviation per value of
    /// (service, transmission, control, rate, gain).
    pub fn stats(&self) -> Vec<SweepStats> {
        self.values
            .iter()
            .map(|&v| {
                let rs: Vec<&SweepRow> = self.rows.iter().filter(|r| r.value == v).collect();
                let cols = |r: &SweepRow| {
                    [r.total_service, r.total_transmission, r.total_control, r.mean_rate, r.mean_gain]
                };
                let n = rs.len() as f64;
                let mut mean = [0.0; 5];
                for r in &rs {
                    for (m, c) in mean.iter_mut().zip(cols(r)) {
                        *m += c / n;
                    }
                }
                let mut std = [0.0; 5];
                if rs.len() > 1 {
                    for r in &rs {
                        for ((s, c), m) in std.iter_mut().zip(cols(r)).zip(mean) {
                            *s += (c - m).powi(2) / (n - 1.0);
                        }
                    }
                    std.iter_mut().for_each(|s| *s = s.sqrt());
                }
                SweepStats { value: v, mean, std }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "sweep_param",
            "value",
            "repetition",
            "seed",
            "total_service_s",
            "total_transmission_s",
            "total_control_s",
            "mean_rate_bps",
            "mean_gain",
        ])?;
        let name = self.param.name();
        for r in &self.rows {
            w.write_record([
                name.to_string(),
                fmt(r.value),
                r.repetition.to_string(),
                r.seed.to_string(),
                fmt(r.total_service),
                fmt(r.total_transmission),
                fmt(r.total_control),
                fmt(r.mean_rate),
                fmt(r.mean_gain),
            ])?;
        }
        for s in self.stats() {
            for (label, vals) in [("mean", s.mean), ("std", s.std)] {
                let mut rec = vec![name.to_string(), fmt(s.value), label.to_string(), String::new()];
                rec.extend(vals.iter().map(|v| fmt(*v)));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Array and baseline sweep tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub array: SweepTable,
    pub baseline: SweepTable,
}

/// Runs every `(value, repetition)` pair, array and baseline.
///
/// Repetition `r` uses the same derived seed for every value, so values are
/// compared on identical user layouts. Runs are executed in parallel and
/// collected in `(value, repetition)` order.
pub fn sweep(base: &SimConfig, param: SweepParam, values: &[f64], repetitions: usize) -> Result<SweepOutput> {
    if values.is_empty() || repetitions == 0 {
        return Err(Error::InvalidInput("sweep needs at least one value and one repetition".into()));
    }
    let configs: Vec<SimConfig> = values
        .iter()
        .map(|&v| param.apply(base, v))
        .collect::<Result<_>>()?;
    for c in &configs {
        c.validate()?;
    }
    let mut planners: BTreeMap<usize, ArrayPlanner> = BTreeMap::new();
    for c in &configs {
        if !planners.contains_key(&c.drone_count) {
            planners.insert(c.drone_count, c.planner()?);
        }
    }
    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|v| (0..repetitions).map(move |r| (v, r)))
        .collect();
    let results: Vec<Result<(SweepRow, SweepRow)>> = jobs
        .par_iter()
        .map(|&(vi, rep)| {
            let mut c = configs[vi].clone();
            c.seed = repetition_seed(base.seed, rep);
            let users = c.users();
            let a = run_array_scenario(&c, &planners[&c.drone_count], &users)?;
            let b = run_multidrone_baseline(&c, &users)?;
            Ok((
                SweepRow::of(values[vi], rep, c.seed, &a),
                SweepRow::of(values[vi], rep, c.seed, &b),
            ))
        })
        .collect();
    let mut array_rows = Vec::with_capacity(jobs.len());
    let mut base_rows = Vec::with_capacity(jobs.len());
    for r in results {
        let (a, b) = r?;
        array_rows.push(a);
        base_rows.push(b);
    }
    Ok(SweepOutput {
        array: SweepTable {
            param,
            values: values.to_vec(),
            rows: array_rows,
        },
        baseline: SweepTable {
            param,
            values: values.to_vec(),
            rows: base_rows,
        },
    })
}

/// Hover rotor speed as the wind grows along `direction`; `None` where the
/// wind exceeds the rotor authority.
pub fn hover_speed_curve(direction: &Vec3, magnitudes: &[f64], p: &DronePhysParams) -> Vec<(f64, Option<f64>)> {
    let dir = direction.normalize();
    magnitudes
        .iter()
        .map(|&m| {
            let f_ext = crate::control::external_force(&(dir * m), p);
            (m, crate::control::stable_hover_speed(&f_ext, p).ok())
        })
        .collect()
}

/// Direction from which the reference array radiates its peak (world frame).
pub fn reference_peak_direction(planner: &ArrayPlanner) -> Result<SphDirection> {
    SphDirection::from_vector(&(planner.pose.frame()? * planner.spacing.peak.unit_vector()))
}
