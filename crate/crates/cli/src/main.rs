mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use drone_array::control::{plan_maneuver, verify_plan, ManeuverRequest, PlanSettings};
use drone_array::placement::{write_poses_csv, UserSite};
use drone_array::quadrotor::integrate;
use drone_array::sim::{hover_speed_curve, run_array_scenario, run_multidrone_baseline, sweep};

use config::{ConfigError, RunConfig, SweepTarget};

#[derive(Parser)]
#[command(name = "drone-array", version, about = "Drone antenna array planner and service-time simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (`key = value` lines); required unless --preset is given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Bundled figure preset (fig4 .. fig8); --config keys override it.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides `scenario.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the drone spacing; writes trace.csv and spacing.csv.
    OptimizeArray,
    /// Plan one maneuver and integrate it; writes plan.csv and trajectory.csv.
    PlanControl,
    /// Serve the scenario's users; writes array.csv and baseline.csv.
    Simulate,
    /// Parameter sweep; writes sweep_array.csv and sweep_baseline.csv (or hover.csv).
    Sweep,
}

enum CliError {
    Config(ConfigError),
    Core(drone_array::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<drone_array::Error> for CliError {
    fn from(e: drone_array::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    if cli.config.is_none() && cli.preset.is_none() {
        return Err(ConfigError("--config is required (or pick a --preset)".into()).into());
    }
    let mut texts = Vec::new();
    if let Some(name) = &cli.preset {
        let text = config::preset(name).ok_or_else(|| {
            ConfigError(format!("unknown preset '{name}' (have {})", config::PRESETS.join(", ")))
        })?;
        texts.push(text.to_string());
    }
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        texts.push(text);
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let mut cfg = RunConfig::parse(&refs)?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::OptimizeArray => optimize_array(&cfg, &cli.out),
        Command::PlanControl => plan_control(&cfg, &cli.out),
        Command::Simulate => simulate(&cfg, &cli.out),
        Command::Sweep => run_sweep(&cfg, &cli.out),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn optimize_array(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let planner = cfg.sim.planner()?;
    let sp = &planner.spacing;
    sp.write_trace_csv(create(out, "trace.csv")?)?;
    let mut w = create(out, "spacing.csv")?;
    writeln!(w, "element,d_m")?;
    for (i, d) in sp.d.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, d)?;
    }
    w.flush()?;

    println!("drones            {}", planner.drone_count());
    println!("iterations        {}", sp.trace.len() - 1);
    println!("stop              {:?}", sp.stop);
    println!("initial D         {:.6}", sp.trace[0].directivity);
    println!("final D           {:.6}", sp.directivity);
    println!("peak theta, phi   {:.6}, {:.6}", sp.peak.theta, sp.peak.phi);
    if let Some(pos) = cfg.user_position {
        let p = planner.plan_for_user(&UserSite {
            position: pos,
            load_bits: cfg.sim.load_bits,
        })?;
        write_poses_csv(create(out, "poses.csv")?, &[p.positions.clone()])?;
        println!("user range        {:.3} m", p.range);
        println!("user gain         {:.6}", p.gain);
        if p.below_min_altitude {
            println!("warning           a drone is below the minimum safe altitude");
        }
    }
    Ok(())
}

fn plan_control(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let s = &cfg.sim;
    let req = ManeuverRequest {
        start: cfg.plan_start,
        goal: cfg.plan_goal,
        wind: s.wind,
        params: s.drone,
    };
    let settings = PlanSettings {
        mode: cfg.plan_mode,
        hold_time: cfg.hold_time,
        max_newton_iters: cfg.max_newton_iters,
    };
    let plan = plan_maneuver(&req, &settings)?;
    plan.write_csv(create(out, "plan.csv")?)?;
    let traj = integrate(&plan.initial_state(), &plan.segments, &plan.wind, &plan.params, cfg.integration_dt)?;
    traj.write_csv(create(out, "trajectory.csv")?)?;
    let c = verify_plan(&plan, cfg.integration_dt)?;

    println!("mode              {:?}", plan.mode);
    println!("distance          {:.6} m", plan.distance);
    println!("control time      {:.6} s", plan.total_time);
    println!("hover speed       {:.6} rad/s", plan.hover_speed);
    println!("closure error     {:.3e} m ({:.3e} of distance)", c.position_error, c.relative_error);
    println!("terminal speed    {:.3e} m/s (peak {:.6} m/s)", c.terminal_speed, c.peak_speed);
    if plan.goal_below_min_altitude {
        println!("warning           goal is below the minimum safe altitude");
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let s = &cfg.sim;
    let planner = s.planner()?;
    let users = s.users();
    let a = run_array_scenario(s, &planner, &users)?;
    let b = run_multidrone_baseline(s, &users)?;
    a.write_csv(create(out, "array.csv")?)?;
    b.write_csv(create(out, "baseline.csv")?)?;

    println!("{:<10} {:>14} {:>14} {:>14} {:>14}", "system", "service_s", "transmit_s", "control_s", "mean_rate_bps");
    for (name, r) in [("array", &a), ("baseline", &b)] {
        println!(
            "{:<10} {:>14.3} {:>14.3} {:>14.3} {:>14.4e}",
            name,
            r.total_service,
            r.total_transmission,
            r.total_control,
            r.mean_rate()
        );
    }
    if a.altitude_violations() > 0 {
        println!("warning: {} placements put a drone below the minimum safe altitude", a.altitude_violations());
    }
    Ok(())
}

fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    match &cfg.sweep_target {
        SweepTarget::HoverSpeed => {
            let mut w = create(out, "hover.csv")?;
            writeln!(w, "direction_x,direction_y,direction_z,wind_n,hover_speed_rad_s")?;
            println!("{:>24} {:>10} {:>16}", "direction", "wind_n", "hover_rad_s");
            for dir in &cfg.hover_directions {
                let u = dir.normalize();
                for (m, v) in hover_speed_curve(dir, &cfg.sweep_values, &cfg.sim.drone) {
                    let v_txt = v.map(|v| v.to_string()).unwrap_or_default();
                    writeln!(w, "{},{},{},{},{}", u.x, u.y, u.z, m, v_txt)?;
                    let shown = v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "infeasible".into());
                    println!("{:>24} {:>10} {:>16}", format!("({:.3},{:.3},{:.3})", u.x, u.y, u.z), m, shown);
                }
            }
            w.flush()?;
        }
        SweepTarget::Scenario(param) => {
            let res = sweep(&cfg.sim, *param, &cfg.sweep_values, cfg.sweep_repetitions)?;
            res.array.write_csv(create(out, "sweep_array.csv")?)?;
            res.baseline.write_csv(create(out, "sweep_baseline.csv")?)?;
            println!(
                "{:>14} {:>16} {:>16} {:>16} {:>16}",
                param.name(),
                "array_service_s",
                "array_control_s",
                "array_transmit_s",
                "baseline_service_s"
            );
            for (a, b) in res.array.stats().iter().zip(res.baseline.stats()) {
                println!(
                    "{:>14} {:>16.3} {:>16.3} {:>16.3} {:>16.3}",
                    a.value, a.mean[0], a.mean[2], a.mean[1], b.mean[0]
                );
            }
        }
    }
    Ok(())
}
