//! Array factor, radiated power, directivity and peak search for the
//! symmetric linear array laid along the x-axis.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{SphDirection, Vec3};
use crate::quadrature::{QuadratureSpec, SphereGrid};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Symmetric linear array: element `n` sits at `+d[n]` with phase `+beta[n]`
/// and its mirror at `-d[n]` with phase `-beta[n]`, both with amplitude `a[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayConfig {
    pub d: Vec<f64>,
    pub a: Vec<f64>,
    pub beta: Vec<f64>,
    pub wavelength: f64,
    pub efficiency: f64,
}

impl ArrayConfig {
    pub fn new(d: Vec<f64>, a: Vec<f64>, beta: Vec<f64>, wavelength: f64) -> Result<Self> {
        let cfg = Self {
            d,
            a,
            beta,
            wavelength,
            efficiency: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `m` unit-amplitude elements with the adjacent phase step `phase_step`,
    /// placed `(n - 1/2) * spacing` from the center.
    pub fn uniform(m: usize, wavelength: f64, spacing: f64, phase_step: f64) -> Result<Self> {
        if m == 0 || m % 2 != 0 {
            return Err(Error::InvalidInput("M must be even".into()));
        }
        let n = m / 2;
        let d = (0..n).map(|i| (i as f64 + 0.5) * spacing).collect();
        let beta = (0..n).map(|i| (i as f64 + 0.5) * phase_step).collect();
        Self::new(d, vec![1.0; n], beta, wavelength)
    }

    /// Adjacent phase difference `pi / (5 (M - 1))` used in the reference setup.
    pub fn reference_phase_step(m: usize) -> f64 {
        PI / (5.0 * (m as f64 - 1.0))
    }

    pub fn half_count(&self) -> usize {
        self.d.len()
    }

    pub fn element_count(&self) -> usize {
        2 * self.d.len()
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn with_spacing(&self, d: Vec<f64>) -> Self {
        Self { d, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.d.len();
        if n == 0 {
            return Err(Error::InvalidInput("array needs at least one element pair".into()));
        }
        if self.a.len() != n || self.beta.len() != n {
            return Err(Error::InvalidInput(
                "spacing, amplitude and phase vectors differ in length".into(),
            ));
        }
        if !(self.wavelength > 0.0) || !self.wavelength.is_finite() {
            return Err(Error::InvalidInput("wavelength must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidInput("efficiency must lie in [0, 1]".into()));
        }
        if self.d.iter().chain(&self.a).chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("array parameters must be finite".into()));
        }
        if self.a.iter().any(|&a| a < 0.0) {
            return Err(Error::InvalidInput("amplitudes must be non-negative".into()));
        }
        if self.d[0] < 0.0 || self.d.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "spacings must be non-negative and strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Element positions, amplitudes and phases for the array laid along `axis`.
    ///
    /// Indices `0..N` carry `+d`, indices `N..2N` the mirrored elements, with
    /// element `2N - 1 - i` the mirror of element `i`.
    pub fn elements_along(&self, axis: &Vec3) -> Vec<Element> {
        let n = self.half_count();
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            out.push(Element {
                position: axis * self.d[i],
                amplitude: self.a[i],
                phase: self.beta[i],
            });
        }
        for i in (0..n).rev() {
            out.push(Element {
                position: -axis * self.d[i],
                amplitude: self.a[i],
                phase: -self.beta[i],
            });
        }
        out
    }
}

/// One radiating element in 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub position: Vec3,
    pub amplitude: f64,
    pub phase: f64,
}

/// Far-field magnitude of a single element.
#[derive(Clone, Default)]
pub enum ElementPattern {
    #[default]
    Isotropic,
    Custom(Arc<dyn Fn(SphDirection) -> f64 + Send + Sync>),
}

impl fmt::Debug for ElementPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementPattern::Isotropic => write!(f, "Isotropic"),
            ElementPattern::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ElementPattern {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(SphDirection) -> f64 + Send + Sync + 'static,
    {
        ElementPattern::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, dir: SphDirection) -> f64 {
        match self {
            ElementPattern::Isotropic => 1.0,
            ElementPattern::Custom(f) => f(dir).max(0.0),
        }
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self, ElementPattern::Isotropic)
    }
}

/// `F = 2 Σ a_n cos(k d_n sinθ cosφ + β_n)`.
pub fn array_factor(cfg: &ArrayConfig, dir: SphDirection) -> f64 {
    array_factor_u(cfg, dir.axis_cosine())
}

/// Array factor as a function of the axis cosine `u = sinθ cosφ`.
#[inline]
pub fn array_factor_u(cfg: &ArrayConfig, u: f64) -> f64 {
    let k = cfg.wavenumber();
    2.0 * cfg
        .d
        .iter()
        .zip(&cfg.a)
        .zip(&cfg.beta)
        .map(|((d, a), b)| a * (k * d * u + b).cos())
        .sum::<f64>()
}

/// Magnitude of `Σ a_m exp(j (k r_m · û + β_m))` for arbitrary element positions.
pub fn array_factor_elements(elements: &[Element], wavelength: f64, dir: SphDirection) -> f64 {
    let k = 2.0 * PI / wavelength;
    let u = dir.unit_vector();
    let (mut re, mut im) = (0.0, 0.0);
    for e in elements {
        let arg = k * e.position.dot(&u) + e.phase;
        re += e.amplitude * arg.cos();
        im += e.amplitude * arg.sin();
    }
    re.hypot(im)
}

/// `∫∫ F² w² sinθ dθ dφ`.
pub fn radiated_power_integral(cfg: &ArrayConfig, w: &ElementPattern, quad: QuadratureSpec) -> f64 {
    radiated_power_on(&SphereGrid::new(quad), cfg, w)
}

pub(crate) fn radiated_power_on(grid: &SphereGrid, cfg: &ArrayConfig, w: &ElementPattern) -> f64 {
    grid.integrate(|dir| {
        let f = array_factor(cfg, dir) * w.eval(dir);
        f * f
    })
}

/// Radiated power of an arbitrary element set.
pub fn radiated_power_elements(
    elements: &[Element],
    wavelength: f64,
    w: &ElementPattern,
    quad: QuadratureSpec,
) -> f64 {
    SphereGrid::new(quad).integrate(|dir| {
        let f = array_factor_elements(elements, wavelength, dir) * w.eval(dir);
        f * f
    })
}

/// `4π F(dir)² w(dir)² / ∫∫ F² w²`.
pub fn directivity(
    cfg: &ArrayConfig,
    w: &ElementPattern,
    dir: SphDirection,
    quad: QuadratureSpec,
) -> Result<f64> {
    let power = radiated_power_integral(cfg, w, quad);
    directivity_with_power(cfg, w, dir, power)
}

/// Directivity using a precomputed radiated-power integral.
pub fn directivity_with_power(
    cfg: &ArrayConfig,
    w: &ElementPattern,
    dir: SphDirection,
    power: f64,
) -> Result<f64> {
    check_power(power, cfg.a.iter().map(|a| a * a).sum::<f64>())?;
    let f = array_factor(cfg, dir) * w.eval(dir);
    Ok(4.0 * PI * f * f / power)
}

/// Directivity of an arbitrary element set given its radiated power.
pub fn directivity_elements(
    elements: &[Element],
    wavelength: f64,
    w: &ElementPattern,
    dir: SphDirection,
    power: f64,
) -> Result<f64> {
    check_power(power, elements.iter().map(|e| e.amplitude * e.amplitude).sum())?;
    let f = array_factor_elements(elements, wavelength, dir) * w.eval(dir);
    Ok(4.0 * PI * f * f / power)
}

fn check_power(power: f64, amp_scale: f64) -> Result<()> {
    if !(power > 1e-300) || !(power > 1e-14 * amp_scale) || !power.is_finite() {
        return Err(Error::NullPattern);
    }
    Ok(())
}

/// Directivity times efficiency.
pub fn gain(
    cfg: &ArrayConfig,
    w: &ElementPattern,
    dir: SphDirection,
    quad: QuadratureSpec,
) -> Result<f64> {
    Ok(directivity(cfg, w, dir, quad)? * cfg.efficiency)
}

const GRID_STEP_DEG: f64 = 1.0;
const GOLDEN_ITERS: usize = 20;
const TIE_REL: f64 = 1e-12;

/// Direction maximizing `|F w|`.
///
/// A 1-degree grid is scanned first; exact ties in magnitude prefer the
/// larger signed value `F w`, then the smallest `theta`, then the smallest
/// `phi`. The winner is polished by golden-section search on `theta` and
/// then on `phi` within one grid step.
pub fn find_peak_direction(cfg: &ArrayConfig, w: &ElementPattern) -> SphDirection {
    let value = |d: SphDirection| array_factor(cfg, d) * w.eval(d);
    peak_search(&value)
}

/// Peak search for an arbitrary element set.
pub fn find_peak_direction_elements(
    elements: &[Element],
    wavelength: f64,
    w: &ElementPattern,
) -> SphDirection {
    let value = |d: SphDirection| array_factor_elements(elements, wavelength, d) * w.eval(d);
    peak_search(&value)
}

fn peak_search(value: &dyn Fn(SphDirection) -> f64) -> SphDirection {
    let step = GRID_STEP_DEG.to_radians();
    let n_theta = (180.0 / GRID_STEP_DEG).round() as usize;
    let n_phi = (360.0 / GRID_STEP_DEG).round() as usize;

    let mut best = SphDirection::new(0.0, 0.0);
    let mut best_v = value(best);
    let consider = |d: SphDirection, v: f64, best: &mut SphDirection, best_v: &mut f64| {
        let (a, b) = (v.abs(), best_v.abs());
        let tol = TIE_REL * a.max(b);
        if a > b + tol || ((a - b).abs() <= tol && v > *best_v + tol) {
            *best = d;
            *best_v = v;
        }
    };
    for i in 1..=n_theta {
        let theta = (i as f64 * step).min(PI);
        if i == n_theta {
            let d = SphDirection::new(PI, 0.0);
            consider(d, value(d), &mut best, &mut best_v);
            continue;
        }
        for j in 0..n_phi {
            let phi = -PI + (j as f64 + 1.0) * step;
            let d = SphDirection { theta, phi };
            consider(d, value(d), &mut best, &mut best_v);
        }
    }

    let sign = if best_v < 0.0 { -1.0 } else { 1.0 };
    let signed = |d: SphDirection| sign * value(d);
    let mut cur = best;
    let mut cur_v = signed(cur);

    let lo = (cur.theta - step).max(0.0);
    let hi = (cur.theta + step).min(PI);
    let phi0 = cur.phi;
    let t = golden_max(|t| signed(SphDirection { theta: t, phi: phi0 }), lo, hi);
    let cand = SphDirection { theta: t, phi: phi0 };
    let v = signed(cand);
    if v > cur_v {
        cur = cand;
        cur_v = v;
    }
    if cur.theta > 0.0 && cur.theta < PI {
        let theta0 = cur.theta;
        let p = golden_max(
            |p| signed(SphDirection { theta: theta0, phi: p }),
            cur.phi - step,
            cur.phi + step,
        );
        let cand = SphDirection { theta: theta0, phi: p };
        if signed(cand) > cur_v {
            cur = cand;
        }
    }
    SphDirection::new(cur.theta, cur.phi)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}
