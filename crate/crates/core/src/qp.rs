//! Primal active-set solver for small convex quadratic programs
//!
//! minimize ½ xᵀ H x + cᵀ x   subject to   A x ≥ b,
//!
//! started from a feasible point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row; zero for inactive rows.
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
    /// True when the KKT system had to be ridge-regularized.
    pub regularized: bool,
    /// Scaled residual of the KKT conditions at the returned point.
    pub kkt_residual: f64,
}

pub fn solve(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: DVector<f64>,
) -> Result<QpSolution> {
    let n = h.nrows();
    let m = a.nrows();
    let scale = h.abs().max().max(c.abs().max()).max(f64::MIN_POSITIVE);
    let feas_tol = 1e-12 * (1.0 + b.abs().max() + x0.abs().max());
    if (a * &x0 - b).iter().any(|&r| r < -feas_tol) {
        return Err(Error::InfeasibleSpacing(
            "starting point violates the constraints".into(),
        ));
    }
    let ridge = 1e-12 * h.trace().abs().max(scale) / n as f64;

    let mut x = x0;
    let mut working: Vec<usize> = Vec::new();
    let mut regularized = false;
    let max_iter = 50 * (n + m).max(1);

    for iter in 0..max_iter {
        let g = h * &x + c;
        let (p, lambda, reg) = solve_eqp(h, &g, a, &working, ridge)?;
        regularized |= reg;
        let step_tol = 1e-13 * (1.0 + x.abs().max());
        if p.abs().max() <= step_tol {
            // stationary on the working set: check multiplier signs
            let mut most_negative: Option<(usize, f64)> = None;
            for (j, &l) in lambda.iter().enumerate() {
                if l < -1e-12 * scale && most_negative.map_or(true, |(_, v)| l < v) {
                    most_negative = Some((j, l));
                }
            }
            match most_negative {
                None => {
                    let mut mult = DVector::zeros(m);
                    for (j, &row) in working.iter().enumerate() {
                        mult[row] = lambda[j];
                    }
                    let kkt_residual = kkt_residual(h, c, a, b, &x, &mult);
                    return Ok(QpSolution {
                        x,
                        multipliers: mult,
                        active: working,
                        iterations: iter + 1,
                        regularized,
                        kkt_residual,
                    });
                }
                Some((j, _)) => {
                    working.remove(j);
                }
            }
        } else {
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..m {
                if working.contains(&i) {
                    continue;
                }
                let ap = a.row(i).dot(&p.transpose());
                if ap < -1e-15 * p.abs().max() {
                    let slack = (a.row(i).dot(&x.transpose()) - b[i]).max(0.0);
                    let t = slack / -ap;
                    if t < alpha {
                        alpha = t;
                        blocking = Some(i);
                    }
                }
            }
            x += alpha * &p;
            if let Some(i) = blocking {
                working.push(i);
            }
        }
    }
    Err(Error::Numerical(
        "active-set iteration limit reached".into(),
    ))
}

/// Solves the equality-constrained step `min ½pᵀHp + gᵀp, A_W p = 0`.
fn solve_eqp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    working: &[usize],
    ridge: f64,
) -> Result<(DVector<f64>, DVector<f64>, bool)> {
    let n = h.nrows();
    let k = working.len();
    let build = |reg: f64| {
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for i in 0..n {
            kkt[(i, i)] += reg;
        }
        for (j, &row) in working.iter().enumerate() {
            for i in 0..n {
                kkt[(i, n + j)] = -a[(row, i)];
                kkt[(n + j, i)] = a[(row, i)];
            }
        }
        kkt
    };
    let mut rhs = DVector::zeros(n + k);
    for i in 0..n {
        rhs[i] = -g[i];
    }
    for (reg, flagged) in [(0.0, false), (ridge, true)] {
        let kkt = build(reg);
        let lu = kkt.clone().lu();
        if let Some(sol) = lu.solve(&rhs) {
            let resid = (&kkt * &sol - &rhs).abs().max();
            let cond_ok = sol.iter().all(|v| v.is_finite())
                && resid <= 1e-9 * (1.0 + rhs.abs().max());
            if cond_ok && (flagged || well_conditioned(&kkt)) {
                let p = sol.rows(0, n).into_owned();
                let lambda = sol.rows(n, k).into_owned();
                return Ok((p, lambda, flagged));
            }
        }
    }
    Err(Error::Numerical("singular KKT system".into()))
}

fn well_conditioned(m: &DMatrix<f64>) -> bool {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    max > 0.0 && min > 1e-13 * max
}

/// Max of scaled stationarity, primal infeasibility, dual infeasibility and
/// complementarity violations.
pub fn kkt_residual(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    mult: &DVector<f64>,
) -> f64 {
    let g = h * x + c;
    let stat = &g - a.transpose() * mult;
    let slack = a * x - b;
    let scale = 1.0 + c.abs().max() + (h * x).abs().max();
    let mut r = stat.abs().max() / scale;
    for i in 0..a.nrows() {
        r = r.max((-slack[i]).max(0.0) / (1.0 + b.abs().max()));
        r = r.max((-mult[i]).max(0.0) / scale);
        r = r.max((mult[i] * slack[i]).abs() / (scale * (1.0 + b.abs().max())));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum_inside_box() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let c = DVector::from_vec(vec![-2.0, -4.0]);
        // -1 <= x_i <= 5
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![-1.0, -5.0, -1.0, -5.0]);
        let s = solve(&h, &c, &a, &b, DVector::zeros(2)).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!(s.active.is_empty());
        assert!(s.kkt_residual < 1e-12);
    }

    #[test]
    fn bound_becomes_active() {
        let h = DMatrix::from_row_slice(1, 1, &[2.0]);
        let c = DVector::from_vec(vec![-10.0]);
        let a = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let b = DVector::from_vec(vec![-1.0]);
        let s = solve(&h, &c, &a, &b, DVector::zeros(1)).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-14);
        assert_eq!(s.active, vec![0]);
        // stationarity: 2*1 - 10 = -lambda  => lambda = 8
        assert!((s.multipliers[0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn singular_hessian_is_regularized_and_bounded() {
        let h = DMatrix::zeros(1, 1);
        let c = DVector::from_vec(vec![-1.0]);
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![-3.0, -2.0]);
        let s = solve(&h, &c, &a, &b, DVector::zeros(1)).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        assert!(s.regularized);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let h = DMatrix::identity(1, 1);
        let c = DVector::zeros(1);
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b = DVector::from_vec(vec![1.0]);
        assert!(matches!(
            solve(&h, &c, &a, &b, DVector::zeros(1)),
            Err(Error::InfeasibleSpacing(_))
        ));
    }
}
