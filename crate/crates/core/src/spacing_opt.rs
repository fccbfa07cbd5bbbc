//! Iterative perturbation optimizer for the element spacings.
//!
//! Each outer iteration linearizes the array factor around the current
//! spacings `d`, which turns the radiated-power denominator into the
//! quadratic `eᵀ G e − 2 eᵀ q` in the perturbation `e`, and solves that
//! quadratic under the minimum-separation and step-size constraints.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::SphDirection;
use crate::pattern::{
    directivity_with_power, find_peak_direction, radiated_power_on, ArrayConfig,
    ElementPattern,
};
use crate::qp;
use crate::quadrature::{QuadratureSpec, SphereGrid};

/// Linearized subproblem around the spacings `d0`.
#[derive(Debug, Clone)]
pub struct PerturbationProblem {
    pub d0: Vec<f64>,
    pub g: DMatrix<f64>,
    pub q: DVector<f64>,
    pub d_min: f64,
    /// Bound on `|e_n|`.
    pub cap: f64,
}

#[derive(Debug, Clone)]
pub struct PerturbationSolution {
    pub e: DVector<f64>,
    /// Multipliers in constraint order: center pair, the `N - 1` adjacent
    /// gaps, then lower and upper step bounds per element.
    pub multipliers: DVector<f64>,
    pub active_constraints: usize,
    pub regularized: bool,
    pub kkt_residual: f64,
}

/// Whether the pattern peak is re-located after every accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeakMode {
    #[default]
    Refresh,
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    /// Step bound as a fraction of the wavelength.
    pub cap_wavelengths: f64,
    pub rel_tol: f64,
    pub max_outer_iters: usize,
    pub max_backtracks: usize,
    pub peak_mode: PeakMode,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            cap_wavelengths: 0.05,
            rel_tol: 1e-6,
            max_outer_iters: 50,
            max_backtracks: 30,
            peak_mode: PeakMode::Refresh,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.cap_wavelengths > 0.0) || !(self.rel_tol > 0.0) || self.max_outer_iters == 0 {
            return Err(Error::InvalidInput(
                "optimizer cap and tolerance must be positive, iteration limit non-zero".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective_integral: f64,
    pub directivity: f64,
    pub max_perturbation: f64,
    pub active_constraints: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Relative decrease of the denominator fell below the tolerance.
    Tolerance,
    /// The subproblem returned a zero perturbation.
    FixedPoint,
    /// No step length along the perturbation improved the pattern.
    NoDescent,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct SpacingResult {
    pub d: Vec<f64>,
    pub peak: SphDirection,
    pub directivity: f64,
    pub objective_integral: f64,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
    pub regularized: bool,
}

impl SpacingResult {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::IterationLimit
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iter",
            "objective_integral",
            "directivity",
            "max_perturbation",
            "active_constraints",
        ])?;
        for r in &self.trace {
            w.write_record([
                r.iter.to_string(),
                format!("{:e}", r.objective_integral),
                format!("{:e}", r.directivity),
                format!("{:e}", r.max_perturbation),
                r.active_constraints.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Initial spacing `(n - 1/2) * max(lambda/2, D_min)`.
pub fn initial_spacing(half_count: usize, wavelength: f64, d_min: f64) -> Vec<f64> {
    let step = (0.5 * wavelength).max(d_min);
    (0..half_count).map(|i| (i as f64 + 0.5) * step).collect()
}

/// `G` and `q` of the linearized denominator, evaluated in one sweep.
///
/// With `s_n = a_n k u sin(k d_n u + beta_n)`, `G_mn = ∫ s_m s_n w²` and
/// `q_n = ∫ s_n (F⁰/2) w²`, so that `∫F(d + e)² w² ≈ ∫F(d)² w² + 4 (eᵀGe − 2qᵀe)`.
pub fn build_g_q(
    cfg: &ArrayConfig,
    w: &ElementPattern,
    d0: &[f64],
    quad: QuadratureSpec,
) -> (DMatrix<f64>, DVector<f64>) {
    build_g_q_on(&SphereGrid::new(quad), cfg, w, d0)
}

fn build_g_q_on(
    grid: &SphereGrid,
    cfg: &ArrayConfig,
    w: &ElementPattern,
    d0: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let n = d0.len();
    let k = cfg.wavenumber();
    let len = n * n + n;
    let v = grid.integrate_vec(len, |dir, out| {
        let u = dir.axis_cosine();
        let ww = {
            let x = w.eval(dir);
            x * x
        };
        let mut s = [0.0f64; 64];
        let mut s_heap;
        let s: &mut [f64] = if n <= 64 {
            &mut s[..n]
        } else {
            s_heap = vec![0.0; n];
            &mut s_heap[..]
        };
        let mut f0 = 0.0;
        for i in 0..n {
            let arg = k * d0[i] * u + cfg.beta[i];
            s[i] = cfg.a[i] * k * u * arg.sin();
            f0 += cfg.a[i] * arg.cos();
        }
        for i in 0..n {
            let si = s[i] * ww;
            for j in i..n {
                out[i * n + j] = si * s[j];
            }
            out[n * n + i] = si * f0;
        }
    });
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            g[(i, j)] = v[i * n + j];
            g[(j, i)] = v[i * n + j];
        }
    }
    let q = DVector::from_iterator(n, v[n * n..].iter().copied());
    (g, q)
}

pub fn build_g(cfg: &ArrayConfig, w: &ElementPattern, d0: &[f64], quad: QuadratureSpec) -> DMatrix<f64> {
    build_g_q(cfg, w, d0, quad).0
}

pub fn build_q(cfg: &ArrayConfig, w: &ElementPattern, d0: &[f64], quad: QuadratureSpec) -> DVector<f64> {
    build_g_q(cfg, w, d0, quad).1
}

/// Checks every separation, including the one across the array center.
pub fn check_spacing(d: &[f64], d_min: f64) -> Result<()> {
    let tol = 1e-12 * (1.0 + d_min);
    if d.is_empty() {
        return Err(Error::InvalidInput("empty spacing vector".into()));
    }
    if 2.0 * d[0] < d_min - tol {
        return Err(Error::InfeasibleSpacing(format!(
            "center gap {:.4} m is below D_min = {:.4} m",
            2.0 * d[0],
            d_min
        )));
    }
    for (i, w) in d.windows(2).enumerate() {
        if w[1] - w[0] < d_min - tol {
            return Err(Error::InfeasibleSpacing(format!(
                "gap {} -> {} is {:.4} m, below D_min = {:.4} m",
                i + 1,
                i + 2,
                w[1] - w[0],
                d_min
            )));
        }
    }
    Ok(())
}

/// Minimizes `eᵀGe − 2eᵀq` subject to the separation constraints on
/// `d0 + e` and `|e_n| ≤ cap`.
pub fn solve_perturbation(prob: &PerturbationProblem) -> Result<PerturbationSolution> {
    let n = prob.d0.len();
    if prob.g.nrows() != n || prob.g.ncols() != n || prob.q.len() != n {
        return Err(Error::InvalidInput("G and q do not match the spacing vector".into()));
    }
    if !(prob.cap >= 0.0) {
        return Err(Error::InvalidInput("perturbation cap must be non-negative".into()));
    }
    check_spacing(&prob.d0, prob.d_min)?;

    let rows = n + 2 * n;
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    a[(0, 0)] = 2.0;
    b[0] = prob.d_min - 2.0 * prob.d0[0];
    for i in 0..n - 1 {
        a[(1 + i, i + 1)] = 1.0;
        a[(1 + i, i)] = -1.0;
        b[1 + i] = prob.d_min + prob.d0[i] - prob.d0[i + 1];
    }
    for i in 0..n {
        a[(n + 2 * i, i)] = 1.0;
        b[n + 2 * i] = -prob.cap;
        a[(n + 2 * i + 1, i)] = -1.0;
        b[n + 2 * i + 1] = -prob.cap;
    }
    // round-off in d0 must not make e = 0 look infeasible
    for i in 0..rows {
        b[i] = b[i].min(0.0);
    }
    let g = 0.5 * (&prob.g + prob.g.transpose());
    let h = 2.0 * &g;
    let c = -2.0 * &prob.q;
    let sol = qp::solve(&h, &c, &a, &b, DVector::zeros(n))?;
    Ok(PerturbationSolution {
        active_constraints: sol.active.len(),
        e: sol.x,
        multipliers: sol.multipliers,
        regularized: sol.regularized,
        kkt_residual: sol.kkt_residual,
    })
}

/// Runs the outer perturbation loop from `d_init`.
///
/// A step `d + alpha e` is accepted only when the radiated-power integral
/// does not increase and the directivity at the (refreshed or frozen) peak
/// does not decrease; `alpha` is halved otherwise.
pub fn optimize_spacing(
    cfg: &ArrayConfig,
    w: &ElementPattern,
    d_init: &[f64],
    d_min: f64,
    settings: &OptimizerSettings,
    quad: QuadratureSpec,
) -> Result<SpacingResult> {
    settings.validate()?;
    quad.validate()?;
    if d_init.len() != cfg.half_count() {
        return Err(Error::InvalidInput("initial spacing length differs from N".into()));
    }
    check_spacing(d_init, d_min)?;
    let grid = SphereGrid::new(quad);
    let cap = settings.cap_wavelengths * cfg.wavelength;

    let mut cur = cfg.with_spacing(d_init.to_vec());
    cur.validate()?;
    let mut peak = find_peak_direction(&cur, w);
    let mut den = radiated_power_on(&grid, &cur, w);
    let mut dir_val = directivity_with_power(&cur, w, peak, den)?;
    let mut trace = vec![TraceRow {
        iter: 0,
        objective_integral: den,
        directivity: dir_val,
        max_perturbation: 0.0,
        active_constraints: 0,
    }];
    let mut regularized = false;
    let mut stop = StopReason::IterationLimit;

    for iter in 1..=settings.max_outer_iters {
        let (g, q) = build_g_q_on(&grid, &cur, w, &cur.d);
        let sol = solve_perturbation(&PerturbationProblem {
            d0: cur.d.clone(),
            g,
            q,
            d_min,
            cap,
        })?;
        regularized |= sol.regularized;
        let e_max = sol.e.abs().max();
        if e_max <= 1e-12 * cfg.wavelength {
            stop = StopReason::FixedPoint;
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_backtracks {
            let d_new: Vec<f64> = cur.d.iter().zip(sol.e.iter()).map(|(d, e)| d + alpha * e).collect();
            if check_spacing(&d_new, d_min).is_ok() {
                let cand = cur.with_spacing(d_new);
                if cand.validate().is_ok() {
                    let den_new = radiated_power_on(&grid, &cand, w);
                    let peak_new = match settings.peak_mode {
                        PeakMode::Refresh => find_peak_direction(&cand, w),
                        PeakMode::Frozen => peak,
                    };
                    if let Ok(dir_new) = directivity_with_power(&cand, w, peak_new, den_new) {
                        if den_new <= den && dir_new >= dir_val {
                            accepted = Some((cand, den_new, peak_new, dir_new));
                            break;
                        }
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((cand, den_new, peak_new, dir_new)) = accepted else {
            stop = StopReason::NoDescent;
            break;
        };
        let rel = (den - den_new) / den;
        cur = cand;
        den = den_new;
        peak = peak_new;
        dir_val = dir_new;
        trace.push(TraceRow {
            iter,
            objective_integral: den,
            directivity: dir_val,
            max_perturbation: alpha * e_max,
            active_constraints: sol.active_constraints,
        });
        if rel < settings.rel_tol {
            stop = StopReason::Tolerance;
            break;
        }
    }

    Ok(SpacingResult {
        d: cur.d,
        peak,
        directivity: dir_val,
        objective_integral: den,
        trace,
        stop,
        regularized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn prob(g: f64, q: f64, cap: f64) -> PerturbationProblem {
        PerturbationProblem {
            d0: vec![1.0],
            g: DMatrix::from_element(1, 1, g),
            q: DVector::from_element(1, q),
            d_min: 0.1,
            cap,
        }
    }

    #[test]
    fn zero_linear_term_gives_zero_step() {
        let s = solve_perturbation(&prob(2.0, 0.0, 0.1)).unwrap();
        assert_eq!(s.e[0], 0.0);
    }

    #[test]
    fn scalar_solve() {
        let s = solve_perturbation(&prob(2.0, 1.0, 10.0)).unwrap();
        assert_relative_eq!(s.e[0], 0.5, epsilon = 1e-14);
        assert_eq!(s.active_constraints, 0);
        assert!(s.kkt_residual <= 1e-8);
    }

    #[test]
    fn cap_limits_the_step() {
        let s = solve_perturbation(&prob(2.0, 1.0, 0.01)).unwrap();
        assert_relative_eq!(s.e[0], 0.01, epsilon = 1e-15);
        assert_eq!(s.active_constraints, 1);
    }

    #[test]
    fn infeasible_start_is_an_error() {
        let mut p = prob(2.0, 1.0, 0.01);
        p.d0 = vec![0.01];
        assert!(matches!(solve_perturbation(&p), Err(Error::InfeasibleSpacing(_))));
    }

    #[test]
    fn initial_spacing_uses_the_larger_step() {
        assert_eq!(initial_spacing(2, 1.0, 0.2), vec![0.25, 0.75]);
        let d = initial_spacing(2, 1.0, 0.8);
        assert!((d[0] - 0.4).abs() < 1e-15 && (d[1] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn g_is_symmetric() {
        let cfg = ArrayConfig::new(vec![0.3, 0.9, 1.4], vec![1.0, 0.5, 0.8], vec![0.1, -0.2, 0.3], 1.0).unwrap();
        let g = build_g(&cfg, &ElementPattern::Isotropic, &cfg.d, QuadratureSpec::new(64, 128).unwrap());
        assert!((&g - g.transpose()).abs().max() <= 1e-10 * g.abs().max());
    }
}
