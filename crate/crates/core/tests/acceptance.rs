//! Acceptance criteria. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any failed.

use fracpwc::caputo_abm::{abm_integrate, FdeProblem};
use fracpwc::cli::LYAPUNOV_DEFAULT_EPSILON;
use fracpwc::dynamics::{
    benettin, cloud_distance, compare_variants, lyapunov_spectrum, periodic_coefficients,
    verify_ml_periodic, AffineSystem, CompareConfig, LyapunovConfig, PeriodicTestProblem,
    DEFAULT_CLOUD_CELL, DISTINCT_CLOUD_THRESHOLD,
};
use fracpwc::mlfunc::{ml_scalar, MlOrder};
use fracpwc::regularize::{AbsApprox, SgnApprox};
use fracpwc::sprott_pwc::{
    affine_pieces, equilibria, ml_solution, simulate, switching_time, RhsVariant, Side, SystemParams,
    DEFAULT_X0,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{rngs::StdRng, Rng, SeedableRng};
use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn integrator_vs_mittag_leffler() -> Outcome {
    let q = 0.98;
    let prob = FdeProblem::new(q, |x: &[f64], out: &mut [f64]| out[0] = -x[0], vec![1.0], 5.0, 1e-3).unwrap();
    let tr = abm_integrate(&prob, 1).unwrap();
    let order = MlOrder::classical(q).unwrap();
    let worst = tr
        .times()
        .iter()
        .zip(tr.states())
        .map(|(t, s)| (s[0] - ml_scalar(order, -t.powf(q)).unwrap()).abs())
        .fold(0.0, f64::max);
    outcome(worst <= 1e-4, format!("max |ABM - E_q(-t^q)| = {worst:.3e} (tol 1e-4)"))
}

fn closed_form_vs_integrator() -> Outcome {
    let p = SystemParams::default();
    let h = 0.002;
    let switch = switching_time(&DEFAULT_X0, &p, 10.0).unwrap().expect("x1 changes sign within t = 10");
    let t_s = switch.time;
    let tr = simulate(&p, &RhsVariant::wa(), &DEFAULT_X0, t_s + 0.5, h, 1).unwrap();
    let window = t_s.min(0.5);
    let mut worst: f64 = 0.0;
    for (t, s) in tr.times().iter().zip(tr.states()) {
        if *t > window {
            break;
        }
        let exact = ml_solution(&DEFAULT_X0, *t, Side::Plus, &p).unwrap();
        worst = worst.max(max_gap(s, &exact));
    }
    let sign0 = DEFAULT_X0[0].signum();
    let first_change = tr
        .states()
        .position(|s| s[0].signum() != sign0)
        .map(|k| tr.times()[k]);
    let t_gap = first_change.map_or(f64::INFINITY, |t| (t - t_s).abs());
    outcome(
        worst <= 1e-3 && t_gap <= 2.0 * h,
        format!(
            "max-norm gap on [0, {window:.4}] = {worst:.3e} (tol 1e-3); t_s = {t_s:.6}, first ABM sign change {first_change:?}, |diff| = {t_gap:.3e} (tol {:.0e})",
            2.0 * h
        ),
    )
}

fn divergence_times() -> Outcome {
    let out = compare_variants(&SystemParams::default(), &DEFAULT_X0, &CompareConfig::default()).unwrap();
    let r = out.report;
    let pass = match (r.t_ga, r.t_la) {
        (Some(g), Some(l)) => g < l && (60.0..=90.0).contains(&g) && l - g > 0.0,
        _ => false,
    };
    outcome(
        pass,
        format!(
            "t_GA = {:?}, t_LA = {:?} (threshold {:e}, horizon {}); need t_GA < t_LA and t_GA in [60, 90]",
            r.t_ga, r.t_la, r.threshold, r.horizon
        ),
    )
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Sign {
    Pos,
    Zero,
    Neg,
}

fn matches_sign(l: f64, s: Sign) -> bool {
    match s {
        Sign::Pos => l >= 0.001,
        Sign::Neg => l <= -0.001,
        Sign::Zero => l.abs() <= 0.005,
    }
}

fn lyapunov_sign_patterns() -> Outcome {
    use Sign::*;
    let cases = [
        (0.9725, 1.77, [Pos, Zero, Neg, Neg], [0.0058, -0.0000, -0.0042, -0.0447]),
        (0.936, 1.19, [Pos, Pos, Zero, Neg], [0.0034, 0.0022, 0.0000, -0.0592]),
    ];
    let eps = LYAPUNOV_DEFAULT_EPSILON;
    let v = RhsVariant::la(eps).unwrap().with_quadratic_abs(eps).unwrap();
    let cfg = LyapunovConfig {
        t_end: 300.0,
        h: 0.005,
        renorm_interval: 10,
        corrector_iters: 1,
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for (q, b, pattern, reference) in cases {
        let p = SystemParams::new(1.0, b, q).unwrap();
        let s = lyapunov_spectrum(&p, &v, &DEFAULT_X0, &cfg).unwrap();
        let ok = s.exponents.iter().zip(pattern).all(|(l, sg)| matches_sign(*l, sg));
        let ortho_ok = s.max_orthonormality_error <= 1e-10;
        let within_half = s
            .exponents
            .iter()
            .zip(reference)
            .filter(|(l, r)| (*l - r).abs() <= 0.5 * r.abs())
            .count();
        pass &= ok && ortho_ok;
        detail.push(format!(
            "q={q} b={b}: {:.5?} want {pattern:?} -> {}; orthonormality {:.1e}; {within_half}/4 within 50% of reference values",
            s.exponents,
            if ok { "ok" } else { "mismatch" },
            s.max_orthonormality_error
        ));
    }
    outcome(pass, detail.join("; "))
}

fn no_equilibria() -> Outcome {
    let mut found = 0;
    for i in 1..=20 {
        for j in 1..=20 {
            let p = SystemParams::new(0.15 * i as f64, 0.15 * j as f64, 0.98).unwrap();
            found += equilibria(&p).unwrap().equilibria.len();
        }
    }
    outcome(found == 0, format!("{found} equilibria over 400 (a, b) pairs"))
}

fn periodic_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(20240611);
    let mut worst: f64 = 0.0;
    let mut worst_limit: f64 = 0.0;
    let mut n = 0;
    while n < 50 {
        let omega = rng.gen_range(0.1..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let prob = PeriodicTestProblem {
            q: rng.gen_range(0.01..0.99),
            beta: rng.gen_range(-3.0..3.0),
            gamma: rng.gen_range(-3.0..3.0),
            omega,
            alpha: rng.gen_range(-PI..PI),
        };
        let c = periodic_coefficients(&prob).unwrap();
        if c.denominator < 1e-3 {
            continue;
        }
        worst = worst.max(verify_ml_periodic(&prob).unwrap());

        let near_one = PeriodicTestProblem { q: 1.0 - 1e-10, ..prob };
        let c1 = periodic_coefficients(&near_one).unwrap();
        let (w, a, b, g) = (c1.omega, c1.alpha, prob.beta, prob.gamma);
        let den = b * b + w * w;
        let classical_a = g * (b * a.cos() + w * (a - FRAC_PI_2).cos()) / den;
        let classical_b = -g * (b * a.sin() + w * (a - FRAC_PI_2).sin()) / den;
        worst_limit = worst_limit.max((c1.a - classical_a).abs()).max((c1.b - classical_b).abs());
        n += 1;
    }
    outcome(
        worst <= 1e-12 && worst_limit <= 1e-8,
        format!("max residual over 50 problems = {worst:.3e} (tol 1e-12); q -> 1 coefficient gap = {worst_limit:.3e} (tol 1e-8)"),
    )
}

fn approximation_invariants() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let scale = || (-8.0f64..1.0).prop_map(|e| 10f64.powf(e));
    let mut failures = Vec::new();
    let mut check = |name: &str, res: Result<(), String>| {
        if let Err(e) = res {
            failures.push(format!("{name}: {e}"));
        }
    };

    check(
        "odd symmetry",
        runner.run(&(scale(), -20.0f64..20.0), |(s, r)| {
            for a in [SgnApprox::global(s).unwrap(), SgnApprox::local(s).unwrap()] {
                prop_assert_eq!(a.eval(-r * s), -a.eval(r * s));
            }
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "range",
        runner.run(&(scale(), -1e3f64..1e3), |(s, x)| {
            for a in [SgnApprox::global(s).unwrap(), SgnApprox::local(s).unwrap()] {
                prop_assert!(a.eval(x).abs() <= 1.0);
            }
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "monotonicity",
        runner.run(&(scale(), -5.0f64..5.0, 0.0f64..2.0), |(s, r, d)| {
            for a in [SgnApprox::global(s).unwrap(), SgnApprox::local(s).unwrap()] {
                prop_assert!(a.eval(r * s) <= a.eval((r + d) * s));
            }
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "cubic C1 gluing",
        runner.run(&scale(), |e| {
            let a = SgnApprox::local(e).unwrap();
            prop_assert_eq!(a.eval(e), 1.0);
            prop_assert_eq!(a.eval(-e), -1.0);
            prop_assert_eq!(a.deriv(e).unwrap(), 0.0);
            prop_assert_eq!(a.deriv(-e).unwrap(), 0.0);
            let inside = e * (1.0 - 1e-6);
            prop_assert!((1.0 - a.eval(inside)).abs() <= 1e-11);
            prop_assert!(a.deriv(inside).unwrap() * e <= 1e-5);
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "quadratic modulus majorizes |x|",
        runner.run(&(scale(), -3.0f64..3.0), |(e, r)| {
            let p = AbsApprox::quadratic(e).unwrap();
            prop_assert!(p.eval(r * e) >= (r * e).abs());
            prop_assert_eq!(p.eval(e), e);
            prop_assert_eq!(p.eval(-e), e);
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "sigmoid equals tanh(x / 2 delta)",
        runner.run(&(scale(), -40.0f64..40.0), |(d, r)| {
            let a = SgnApprox::global(d).unwrap();
            let x = r * d;
            prop_assert!((a.eval(x) - (x / (2.0 * d)).tanh()).abs() <= 4.0 * f64::EPSILON);
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    check(
        "derivative vs central difference",
        runner.run(&(scale(), -0.99f64..0.99, 1.01f64..3.0), |(s, r, out)| {
            let step = 1e-5 * s;
            let fd = |f: &dyn Fn(f64) -> f64, x: f64| (f(x + step) - f(x - step)) / (2.0 * step);
            let rel = |fd: f64, d: f64| (fd - d).abs() / d.abs();
            let g = SgnApprox::global(s).unwrap();
            let l = SgnApprox::local(s).unwrap();
            let p = AbsApprox::quadratic(s).unwrap();
            let xg = 10.0 * r * s;
            prop_assert!(rel(fd(&|x| g.eval(x), xg), g.deriv(xg).unwrap()) <= 1e-6);
            let xl = r * s;
            prop_assert!(rel(fd(&|x| l.eval(x), xl), l.deriv(xl).unwrap()) <= 1e-6);
            if r.abs() >= 0.01 {
                prop_assert!(rel(fd(&|x| p.eval(x), xl), p.deriv(xl).unwrap()) <= 1e-6);
            }
            let xo = out * s * r.signum();
            prop_assert!(rel(fd(&|x| p.eval(x), xo), p.deriv(xo).unwrap()) <= 1e-6);
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );

    let pass = failures.is_empty();
    let detail = if pass {
        "7 properties x 1000 cases".to_string()
    } else {
        failures.join("; ")
    };
    outcome(pass, detail)
}

fn multistability() -> Outcome {
    let p = SystemParams::new(1.0, 2.2, 0.98).unwrap();
    let v = RhsVariant::la(1e-6).unwrap();
    let (t_end, h, transient) = (400.0, 0.005, 0.5);
    let a = simulate(&p, &v, &[1.0, 2.0, 0.0, 1.0], t_end, h, 1).unwrap();
    let b = simulate(&p, &v, &[11.0, -1.0, 0.0, 0.1], t_end, h, 1).unwrap();
    let proj = [0, 1, 3];
    let d = cloud_distance(&a, &b, &proj, transient, DEFAULT_CLOUD_CELL).unwrap();

    // Control: the two halves of the settled part of the first run.
    let n = a.len();
    let split = |lo: usize, hi: usize| {
        let mut t = fracpwc::caputo_abm::Trajectory::new(h, 4);
        (lo..hi).for_each(|k| t.push(a.state(k)));
        t
    };
    let control = cloud_distance(&split(n / 2, 3 * n / 4), &split(3 * n / 4, n), &proj, 0.0, DEFAULT_CLOUD_CELL).unwrap();
    outcome(
        d > DISTINCT_CLOUD_THRESHOLD,
        format!(
            "cloud distance (x1,x2,x4) = {d:.3} > {DISTINCT_CLOUD_THRESHOLD} (cell {DEFAULT_CLOUD_CELL}); same-run control {control:.3}"
        ),
    )
}

fn affine_benettin_oracle() -> Outcome {
    let p = SystemParams::default();
    let m = affine_pieces(&p).m_plus;
    let mat = DMatrix::from_iterator(4, 4, m.iter().copied());
    let mut real_parts: Vec<f64> = mat.complex_eigenvalues().iter().map(|z| z.re).collect();
    real_parts.sort_by(|a, b| b.total_cmp(a));
    let sys = AffineSystem::new(mat, vec![0.0, 0.0, -p.a, 0.0]).unwrap();
    let cfg = LyapunovConfig {
        t_end: 1000.0,
        h: 0.01,
        renorm_interval: 10,
        corrector_iters: 1,
    };
    let res = benettin(&sys, 1.0, &DEFAULT_X0, &cfg).unwrap();
    let worst = max_gap(&res.exponents, &real_parts);
    outcome(
        worst <= 5e-3,
        format!("exponents {:.5?} vs Re(eig) {:.5?}, max gap {worst:.2e} (tol 5e-3)", res.exponents, real_parts),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("integrator vs Mittag-Leffler oracle", integrator_vs_mittag_leffler),
        ("closed-form affine solution and switching time", closed_form_vs_integrator),
        ("GA/LA divergence times", divergence_times),
        ("Lyapunov sign patterns", lyapunov_sign_patterns),
        ("no equilibria", no_equilibria),
        ("harmonic solution identity", periodic_identity),
        ("approximation invariants", approximation_invariants),
        ("coexisting attractors", multistability),
        ("Benettin on the affine system", affine_benettin_oracle),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        println!(
            "criterion {} [{}] {name}: {} ({:.1}s)",
            i + 1,
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            start.elapsed().as_secs_f64()
        );
        if !out.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
