//! Integration over the unit sphere.
//!
//! The polar direction uses Gauss-Legendre nodes in `cos(theta)`, which
//! absorbs the `sin(theta)` Jacobian; the azimuth uses the periodic
//! trapezoid rule. Both converge spectrally for the smooth patterns
//! integrated here.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::SphDirection;

pub const MIN_N_THETA: usize = 64;
pub const MIN_N_PHI: usize = 128;

/// Grid sizes for sphere integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            n_theta: 256,
            n_phi: 512,
        }
    }
}

impl QuadratureSpec {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        let q = Self { n_theta, n_phi };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_theta < MIN_N_THETA || self.n_phi < MIN_N_PHI {
            return Err(Error::InvalidInput(format!(
                "quadrature grid {}x{} is below the minimum {}x{}",
                self.n_theta, self.n_phi, MIN_N_THETA, MIN_N_PHI
            )));
        }
        Ok(())
    }

    /// Same grid with both axes doubled.
    pub fn refined(&self) -> Self {
        Self {
            n_theta: 2 * self.n_theta,
            n_phi: 2 * self.n_phi,
        }
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// nodes in increasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Precomputed tensor grid on the sphere.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub spec: QuadratureSpec,
    /// `(theta, weight)` per polar row; the weight includes `sin(theta) dtheta`.
    pub rows: Vec<(f64, f64)>,
    /// Azimuth nodes (shared by all rows).
    pub phis: Vec<f64>,
    pub phi_weight: f64,
}

impl SphereGrid {
    pub fn new(spec: QuadratureSpec) -> Self {
        let (x, w) = gauss_legendre(spec.n_theta);
        let rows = x.iter().zip(&w).map(|(&c, &wt)| (c.acos(), wt)).collect();
        let h = 2.0 * PI / spec.n_phi as f64;
        let phis = (0..spec.n_phi).map(|j| -PI + (j as f64 + 0.5) * h).collect();
        Self {
            spec,
            rows,
            phis,
            phi_weight: h,
        }
    }

    /// Integral of `f` over the sphere, `∫∫ f sin(theta) dtheta dphi`.
    ///
    /// Rows are evaluated in parallel and then summed in row order, so
    /// the result does not depend on the thread count.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(SphDirection) -> f64 + Sync,
    {
        let row_sums: Vec<f64> = self
            .rows
            .par_iter()
            .map(|&(theta, wt)| {
                let s: f64 = self
                    .phis
                    .iter()
                    .map(|&phi| f(SphDirection { theta, phi }))
                    .sum();
                s * wt
            })
            .collect();
        row_sums.iter().sum::<f64>() * self.phi_weight
    }

    /// Integral of a vector-valued integrand of fixed length `len`.
    ///
    /// `f` writes its value into the provided buffer (zeroed per call).
    pub fn integrate_vec<F>(&self, len: usize, f: F) -> Vec<f64>
    where
        F: Fn(SphDirection, &mut [f64]) + Sync,
    {
        let row_sums: Vec<Vec<f64>> = self
            .rows
            .par_iter()
            .map(|&(theta, wt)| {
                let mut acc = vec![0.0; len];
                let mut buf = vec![0.0; len];
                for &phi in &self.phis {
                    buf.iter_mut().for_each(|b| *b = 0.0);
                    f(SphDirection { theta, phi }, &mut buf);
                    for (a, b) in acc.iter_mut().zip(&buf) {
                        *a += b;
                    }
                }
                acc.iter_mut().for_each(|a| *a *= wt);
                acc
            })
            .collect();
        let mut total = vec![0.0; len];
        for row in &row_sums {
            for (t, r) in total.iter_mut().zip(row) {
                *t += r;
            }
        }
        total.iter_mut().for_each(|t| *t *= self.phi_weight);
        total
    }
}

/// Relative change of an integral when the grid is doubled in both axes.
pub fn convergence_estimate<F>(spec: QuadratureSpec, f: F) -> f64
where
    F: Fn(SphDirection) -> f64 + Sync,
{
    let coarse = SphereGrid::new(spec).integrate(&f);
    let fine = SphereGrid::new(spec.refined()).integrate(&f);
    (coarse - fine).abs() / fine.abs().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_small_rules() {
        let (x, w) = gauss_legendre(2);
        assert_relative_eq!(x[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-15);
        let (x, w) = gauss_legendre(3);
        assert_eq!(x[1], 0.0);
        assert_relative_eq!(x[2], (0.6f64).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[1], 8.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [5, 16, 64, 256] {
            let (x, w) = gauss_legendre(n);
            let sum_w: f64 = w.iter().sum();
            assert_relative_eq!(sum_w, 2.0, epsilon = 1e-13);
            // degree 2n-2 monomial is integrated exactly
            let p = (2 * n - 2) as i32;
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p)).sum();
            assert_relative_eq!(q, 2.0 / (p as f64 + 1.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn unit_sphere_area() {
        let g = SphereGrid::new(QuadratureSpec::default());
        assert_relative_eq!(g.integrate(|_| 1.0), 4.0 * PI, max_relative = 1e-13);
    }

    #[test]
    fn axis_cosine_moments_match_isotropic_formula() {
        // ∫ g(sinθ cosφ) dΩ = 2π ∫_{-1}^{1} g(u) du
        let g = SphereGrid::new(QuadratureSpec::default());
        let val = g.integrate(|d| d.axis_cosine().powi(4));
        assert_relative_eq!(val, 2.0 * PI * 2.0 / 5.0, max_relative = 1e-12);
        let val = g.integrate(|d| (3.0 * d.axis_cosine()).cos());
        assert_relative_eq!(val, 2.0 * PI * 2.0 * 3f64.sin() / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn vector_integral_matches_scalar_integrals() {
        let g = SphereGrid::new(QuadratureSpec::new(64, 128).unwrap());
        let v = g.integrate_vec(2, |d, out| {
            out[0] = d.theta.cos().powi(2);
            out[1] = 1.0;
        });
        assert_relative_eq!(v[0], g.integrate(|d| d.theta.cos().powi(2)), max_relative = 1e-14);
        assert_relative_eq!(v[1], 4.0 * PI, max_relative = 1e-13);
    }

    #[test]
    fn spec_rejects_coarse_grids() {
        assert!(QuadratureSpec::new(32, 128).is_err());
        assert!(QuadratureSpec::new(64, 64).is_err());
        assert!(QuadratureSpec::new(64, 128).is_ok());
    }

    #[test]
    fn result_is_independent_of_thread_count() {
        let g = SphereGrid::new(QuadratureSpec::default());
        let f = |d: SphDirection| (5.0 * d.axis_cosine() + 0.3).cos().powi(2);
        let a = g.integrate(f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| g.integrate(f));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
