use std::f64::consts::PI;

use approx::assert_relative_eq;
use drone_array::pattern::*;
use drone_array::qp;
use drone_array::quadrature::QuadratureSpec;
use drone_array::spacing_opt::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quad() -> QuadratureSpec {
    QuadratureSpec::new(96, 192).unwrap()
}

fn random_config(m: usize, rng: &mut ChaCha8Rng) -> ArrayConfig {
    let n = m / 2;
    let mut d = Vec::new();
    let mut x = rng.gen_range(0.1..0.3);
    for _ in 0..n {
        d.push(x);
        x += rng.gen_range(0.2..0.7);
    }
    let a = (0..n).map(|_| rng.gen_range(0.3..1.2)).collect();
    let beta = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ArrayConfig::new(d, a, beta, 1.0).unwrap()
}

#[test]
fn g_is_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in [4usize, 6, 10] {
        for _ in 0..5 {
            let cfg = random_config(m, &mut rng);
            let g = build_g(&cfg, &ElementPattern::Isotropic, &cfg.d, quad());
            let min = SymmetricEigen::new(g.clone()).eigenvalues.min();
            assert!(min >= -1e-9 * g.norm(), "min eigenvalue {min}");
        }
    }
}

/// `G_mn` and `q_n` by direct 1D integration over the axis cosine, using
/// `s_n = a_n k u sin(k d_n u + β_n)` and the half-array sum `F⁰ / 2`.
#[test]
fn g_and_q_match_one_dimensional_integrals() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = random_config(6, &mut rng);
    let k = cfg.wavenumber();
    let n = cfg.half_count();
    let g = build_g(&cfg, &ElementPattern::Isotropic, &cfg.d, QuadratureSpec::default());
    let q = build_q(&cfg, &ElementPattern::Isotropic, &cfg.d, QuadratureSpec::default());
    let s = |i: usize, u: f64| cfg.a[i] * k * u * (k * cfg.d[i] * u + cfg.beta[i]).sin();
    // Composite Simpson over u ∈ [-1, 1], times 2π.
    let simpson = |f: &dyn Fn(f64) -> f64| {
        let steps = 20_000;
        let h = 2.0 / steps as f64;
        let mut acc = f(-1.0) + f(1.0);
        for i in 1..steps {
            let u = -1.0 + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
        }
        2.0 * PI * acc * h / 3.0
    };
    for i in 0..n {
        let qi = simpson(&|u| s(i, u) * 0.5 * array_factor_u(&cfg, u));
        assert_relative_eq!(q[i], qi, max_relative = 1e-8, epsilon = 1e-8);
        for j in 0..n {
            let gij = simpson(&|u| s(i, u) * s(j, u));
            assert_relative_eq!(g[(i, j)], gij, max_relative = 1e-8, epsilon = 1e-8);
        }
    }
}

#[test]
fn linear_term_is_the_denominator_gradient() {
    // ∫F(d + e)² ≈ ∫F(d)² + 4 (eᵀGe - 2qᵀe): the gradient is -8q.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = random_config(6, &mut rng);
    let q = build_q(&cfg, &ElementPattern::Isotropic, &cfg.d, QuadratureSpec::default());
    let power = |d: Vec<f64>| radiated_power_integral(&cfg.with_spacing(d), &ElementPattern::Isotropic, QuadratureSpec::default());
    let h = 1e-5;
    for i in 0..3 {
        let mut up = cfg.d.clone();
        let mut dn = cfg.d.clone();
        up[i] += h;
        dn[i] -= h;
        let grad = (power(up) - power(dn)) / (2.0 * h);
        assert_relative_eq!(grad, -8.0 * q[i], max_relative = 1e-6, epsilon = 1e-6);
    }
}

/// Objective of the subproblem: `eᵀGe - 2qᵀe`.
fn objective(g: &DMatrix<f64>, q: &DVector<f64>, e: &DVector<f64>) -> f64 {
    (e.transpose() * g * e)[(0, 0)] - 2.0 * q.dot(e)
}

/// Constraint rows `A e ≥ b` of the two-element subproblem.
fn rows(p: &PerturbationProblem) -> Vec<([f64; 2], f64)> {
    let (d, dm, c) = (&p.d0, p.d_min, p.cap);
    vec![
        ([2.0, 0.0], dm - 2.0 * d[0]),
        ([-1.0, 1.0], dm - (d[1] - d[0])),
        ([1.0, 0.0], -c),
        ([-1.0, 0.0], -c),
        ([0.0, 1.0], -c),
        ([0.0, -1.0], -c),
    ]
}

/// Global minimum by enumerating every active set of size ≤ 2.
fn enumerate(p: &PerturbationProblem) -> DVector<f64> {
    let rs = rows(p);
    let feasible = |e: &DVector<f64>| rs.iter().all(|(a, b)| a[0] * e[0] + a[1] * e[1] >= b - 1e-12);
    let mut cands: Vec<DVector<f64>> = Vec::new();
    if let Some(e) = p.g.clone().lu().solve(&p.q) {
        cands.push(e);
    }
    for (i, (a, b)) in rs.iter().enumerate() {
        // min eᵀGe - 2qᵀe  s.t. aᵀe = b
        let kkt = DMatrix::from_row_slice(3, 3, &[
            2.0 * p.g[(0, 0)], 2.0 * p.g[(0, 1)], -a[0],
            2.0 * p.g[(1, 0)], 2.0 * p.g[(1, 1)], -a[1],
            a[0], a[1], 0.0,
        ]);
        let rhs = DVector::from_vec(vec![2.0 * p.q[0], 2.0 * p.q[1], *b]);
        if let Some(x) = kkt.lu().solve(&rhs) {
            cands.push(DVector::from_vec(vec![x[0], x[1]]));
        }
        for (a2, b2) in rs.iter().skip(i + 1) {
            let m = DMatrix::from_row_slice(2, 2, &[a[0], a[1], a2[0], a2[1]]);
            if let Some(x) = m.lu().solve(&DVector::from_vec(vec![*b, *b2])) {
                cands.push(x);
            }
        }
    }
    cands
        .into_iter()
        .filter(|e| feasible(e))
        .min_by(|x, y| objective(&p.g, &p.q, x).total_cmp(&objective(&p.g, &p.q, y)))
        .expect("the zero step is always feasible")
}

#[test]
fn two_element_subproblem_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let l = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let g = &l * l.transpose() + DMatrix::identity(2, 2) * rng.gen_range(1e-3..0.5);
        let q = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let d_min = 0.2;
        let d0 = vec![rng.gen_range(0.1..0.3), 0.0];
        let d0 = vec![d0[0], d0[0] + d_min + rng.gen_range(0.0..0.2)];
        let p = PerturbationProblem { d0, g, q, d_min, cap: rng.gen_range(0.01..0.2) };
        let got = solve_perturbation(&p).unwrap();
        let want = enumerate(&p);
        let (fo, fw) = (objective(&p.g, &p.q, &got.e), objective(&p.g, &p.q, &want));
        assert!(fo <= fw + 1e-10 * (1.0 + fw.abs()), "active set {fo} vs enumeration {fw}");
        assert!((&got.e - &want).norm() <= 1e-7 * (1.0 + want.norm()), "{} vs {}", got.e, want);
        assert!(got.multipliers.iter().all(|&m| m >= -1e-9));
    }
}

#[test]
fn qp_kkt_conditions_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [3usize, 5, 8] {
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        // Box |x| ≤ 0.5.
        let mut a = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            a[(2 * i, i)] = 1.0;
            a[(2 * i + 1, i)] = -1.0;
        }
        let b = DVector::from_element(2 * n, -0.5);
        let s = qp::solve(&h, &c, &a, &b, DVector::zeros(n)).unwrap();
        let stat = &h * &s.x + &c - a.transpose() * &s.multipliers;
        assert!(stat.norm() < 1e-10, "stationarity {}", stat.norm());
        let slack = &a * &s.x - &b;
        for i in 0..2 * n {
            assert!(slack[i] >= -1e-12);
            assert!(s.multipliers[i] >= -1e-12);
            assert!((slack[i] * s.multipliers[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn optimizer_trace_is_monotone_and_spacing_feasible() {
    let cfg = ArrayConfig::uniform(6, 1.0, 0.5, ArrayConfig::reference_phase_step(6)).unwrap();
    let d_min = 0.3;
    let d0 = initial_spacing(3, 1.0, d_min);
    let r = optimize_spacing(&cfg, &ElementPattern::Isotropic, &d0, d_min, &OptimizerSettings::default(), quad()).unwrap();
    for w in r.trace.windows(2) {
        assert!(w[1].objective_integral <= w[0].objective_integral);
        assert!(w[1].directivity >= w[0].directivity);
    }
    check_spacing(&r.d, d_min).unwrap();
    assert!(r.directivity >= r.trace[0].directivity);
}

#[test]
fn frozen_peak_mode_also_descends() {
    let cfg = ArrayConfig::uniform(4, 1.0, 0.5, ArrayConfig::reference_phase_step(4)).unwrap();
    let settings = OptimizerSettings { peak_mode: PeakMode::Frozen, ..OptimizerSettings::default() };
    let r = optimize_spacing(&cfg, &ElementPattern::Isotropic, &[0.25, 0.75], 0.2, &settings, quad()).unwrap();
    for w in r.trace.windows(2) {
        assert!(w[1].objective_integral <= w[0].objective_integral);
    }
}

#[test]
fn infeasible_start_is_reported() {
    let cfg = ArrayConfig::uniform(4, 1.0, 0.5, 0.0).unwrap();
    let r = optimize_spacing(&cfg, &ElementPattern::Isotropic, &[0.25, 0.75], 0.6, &OptimizerSettings::default(), quad());
    assert!(matches!(r, Err(drone_array::Error::InfeasibleSpacing(_))));
}

#[test]
fn trace_csv_has_a_row_per_iteration() {
    let cfg = ArrayConfig::uniform(4, 1.0, 0.5, 0.1).unwrap();
    let r = optimize_spacing(&cfg, &ElementPattern::Isotropic, &[0.25, 0.75], 0.2, &OptimizerSettings::default(), quad()).unwrap();
    let mut buf = Vec::new();
    r.write_trace_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), r.trace.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn perturbation_respects_constraints(seed in 0u64..10_000, n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let g = &l * l.transpose();
        let q = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
        let d_min = 0.2;
        let mut d0 = vec![0.1 + rng.gen_range(0.0..0.1)];
        for _ in 1..n {
            let last = *d0.last().unwrap();
            d0.push(last + d_min + rng.gen_range(0.0..0.1));
        }
        let cap = 0.05;
        let p = PerturbationProblem { d0: d0.clone(), g, q, d_min, cap };
        let s = solve_perturbation(&p).unwrap();
        let d: Vec<f64> = d0.iter().zip(s.e.iter()).map(|(a, b)| a + b).collect();
        prop_assert!(check_spacing(&d, d_min - 1e-9).is_ok());
        prop_assert!(s.e.iter().all(|e| e.abs() <= cap + 1e-12));
        prop_assert!(objective(&p.g, &p.q, &s.e) <= 1e-12);
    }
}
