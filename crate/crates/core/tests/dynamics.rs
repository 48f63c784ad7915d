mod common;

use common::{expm, random_matrix, with_spectrum};
use fractrace_core::dynamics::*;
use fractrace_core::matrix_ops::{image_basis, rank, sigma_min, tol_singular, RealMatrix, RealVector};
use fractrace_core::ml_zeros::{refine_zero, ZeroTable};
use fractrace_core::scalar_ml::{ml_eval, MlParams};
use fractrace_core::{Complex64, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rotation(alpha: f64) -> FractionalSystem {
    FractionalSystem::new(alpha, real_block(c(0.0, 1.0))).unwrap()
}

/// First zero of `E_{1/2}` in the upper half plane.
fn zeta_half() -> Complex64 {
    refine_zero(MlParams::new(0.5, 1.0).unwrap(), c(1.35, 2.0)).unwrap().location
}

fn collapse2() -> FractionalSystem {
    FractionalSystem::new(0.5, collapse_matrix(0.5, zeta_half(), 1.0)).unwrap()
}

fn collapse3() -> FractionalSystem {
    FractionalSystem::new(0.5, with_diagonal(&collapse_matrix(0.5, zeta_half(), 1.0), &[-1.0])).unwrap()
}

fn eta(seed: Complex64) -> Complex64 {
    refine_zero(MlParams::new(1.0 / 3.0, 0.0).unwrap(), seed).unwrap().location
}

fn third_system(seed: Complex64) -> FractionalSystem {
    FractionalSystem::new(1.0 / 3.0, real_block(eta(seed))).unwrap()
}

fn random_vec(rng: &mut impl Rng, n: usize) -> RealVector {
    RealVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random real 3×3 with eigenvalues in the open left half plane away from
/// zero rays: one negative real and a pair with `|arg| ≥ 0.75π`.
fn random_type_one(rng: &mut impl Rng) -> RealMatrix {
    let r = rng.gen_range(0.3..1.5);
    let th = rng.gen_range(0.75..0.95) * std::f64::consts::PI;
    let l = Complex64::from_polar(r, th);
    let real = -rng.gen_range(0.2..1.5);
    with_spectrum(rng, &[l, l.conj(), c(real, 0.0)])
}

#[test]
fn rotation_trajectory_matches_block_form() {
    let sys = rotation(0.9);
    let x0 = vector(&[2.0, 1.0]);
    let grid = linspace(0.0, 3.0, 600);
    let tr = solve_trajectory(&sys, &x0, &grid).unwrap();
    assert_eq!(tr.samples.len(), 600);
    for (t, x) in tr.samples.iter().step_by(37) {
        let e = ml_eval(MlParams::new(0.9, 1.0).unwrap(), c(0.0, t.powf(0.9))).unwrap().value;
        let want = vector(&[2.0 * e.re + e.im, -2.0 * e.im + e.re]);
        assert!((x - want).norm() < 1e-12, "t = {t}");
    }
    assert!(tr.ivp_residual().unwrap().relative <= 5e-3);
}

#[test]
fn zero_initial_state_stays_at_origin() {
    let sys = rotation(0.7);
    let tr = solve_trajectory(&sys, &vector(&[0.0, 0.0]), &linspace(0.0, 2.0, 20)).unwrap();
    assert!(tr.samples.iter().all(|(_, x)| x.norm() == 0.0));
    assert!(zero_intersection(&collapse2(), &vector(&[0.0, 0.0]), 7.0).unwrap().is_none());
    assert!(multiple_points(&rotation(0.5), &vector(&[0.0, 0.0]), 5.0).unwrap().is_empty());
}

#[test]
fn l1_residual_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let alpha = rng.gen_range(0.3..0.95);
        let n = rng.gen_range(2..=4);
        let sys = FractionalSystem::new(alpha, random_matrix(&mut rng, n, 1.0)).unwrap();
        let x0 = random_vec(&mut rng, n);
        let r = ivp_residual(&sys, &x0, RESIDUAL_WINDOW, RESIDUAL_STEP).unwrap();
        assert!(r.relative <= 5e-3, "α={alpha}: {}", r.relative);
    }
}

#[test]
fn linearity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sys = FractionalSystem::new(0.6, random_matrix(&mut rng, 3, 1.0)).unwrap();
    let (x, y) = (random_vec(&mut rng, 3), random_vec(&mut rng, 3));
    for t in [0.3, 1.0, 2.5] {
        let lhs = sys.propagate(&(&x * 1.7 - &y * 0.4), t).unwrap();
        let rhs = sys.propagate(&x, t).unwrap() * 1.7 - sys.propagate(&y, t).unwrap() * 0.4;
        assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm());
    }
}

#[test]
fn rotation_is_type_one() {
    let alpha = 0.9;
    let table = ZeroTable::shared(MlParams::new(alpha, 1.0).unwrap(), 20.0).unwrap();
    assert!(!table.zeros.is_empty());
    for z in &table.zeros {
        assert!((z.location.arg().abs() - std::f64::consts::FRAC_PI_2).abs() > 1e-6);
    }
    let cl = classify(&rotation(alpha), 20.0, 1e-6).unwrap();
    assert_eq!(cl.verdict, Verdict::TypeI);
    assert!(cl.criticals.is_empty());
    assert!(cl.asymptotic_flags.is_empty());
    assert_eq!(cl.search_bound, 20.0);
    assert!(critical_times(&rotation(alpha), 20.0).unwrap().is_empty());
}

#[test]
fn negative_real_spectrum_is_type_one() {
    let sys = FractionalSystem::new(0.5, RealMatrix::from_diagonal(&vector(&[-0.5, -2.0]))).unwrap();
    let cl = classify(&sys, default_search_bound(0.5), 1e-6).unwrap();
    assert_eq!(cl.verdict, Verdict::TypeI);
}

#[test]
fn sector_edge_is_flagged() {
    let alpha: f64 = 0.6;
    let l = Complex64::from_polar(1.0, alpha * std::f64::consts::FRAC_PI_2 + 0.01);
    let sys = FractionalSystem::new(alpha, real_block(l)).unwrap();
    let cl = classify(&sys, 5.0, 1e-6).unwrap();
    assert_eq!(cl.asymptotic_flags.len(), 2);
}

#[test]
fn collapse_systems_are_type_two() {
    let sys = collapse2();
    let r = default_search_bound(0.5);
    let cl = classify(&sys, r, 1e-6).unwrap();
    assert_eq!(cl.verdict, Verdict::TypeII);
    let first = cl.criticals[0].t_critical;
    assert!((first - 1.0).abs() < 1e-4, "T = {first}");
    let three = critical_times(&collapse3(), r).unwrap();
    assert!((three[0].t_critical - first).abs() < 1e-12);
}

#[test]
fn collapse_sends_every_state_to_origin() {
    let sys = collapse2();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x0 = random_vec(&mut rng, 2);
        let hit = zero_intersection(&sys, &x0, default_search_bound(0.5)).unwrap().expect("crossing");
        assert!((hit.ray.t_critical - 1.0).abs() < 1e-4);
        assert!(hit.state_norm <= 1e-5 * x0.norm());
    }
}

#[test]
fn type_one_never_reaches_origin() {
    let sys = rotation(0.9);
    let x0 = vector(&[2.0, 1.0]);
    assert!(zero_intersection(&sys, &x0, 20.0).unwrap().is_none());
    let grid = linspace(0.01, 10.0, 500);
    let min =
        solve_trajectory(&sys, &x0, &grid).unwrap().samples.iter().map(|(_, x)| x.norm()).fold(f64::INFINITY, f64::min);
    assert!(min > 0.0);
}

#[test]
fn three_by_three_collapse_lands_on_axis() {
    let sys = collapse3();
    let m = sys.operator(1.0).unwrap();
    assert!(rank(&m, 1e-6).unwrap() < 3);
    let img = image_basis(&m, 1e-6).unwrap();
    assert_eq!(img.dim(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let x0 = random_vec(&mut rng, 3);
        let u = sys.propagate(&x0, 1.0).unwrap();
        assert!(img.distance(&u) <= 1e-6 * x0.norm());
        assert!(u[0].hypot(u[1]) <= 1e-6);
    }
}

#[test]
fn eist_preimages() {
    let sys = rotation(0.9);
    let x0 = vector(&[2.0, 1.0]);
    let p = sys.propagate(&x0, 1.3).unwrap();
    match eist_preimage(&sys, &p, 1.3).unwrap() {
        EistPreimage::Unique(x) => assert!((x - &x0).norm() <= 1e-7 * (1.0 + x0.norm())),
        other => panic!("expected a unique preimage, got {other:?}"),
    }

    let sys = collapse3();
    let cval = 0.8;
    let e = ml_eval(MlParams::new(0.5, 1.0).unwrap(), c(-1.0, 0.0)).unwrap().value.re;
    match eist_preimage(&sys, &vector(&[0.0, 0.0, cval]), 1.0).unwrap() {
        EistPreimage::Fiber(set) => {
            assert_eq!(set.dim(), 2);
            assert!((set.base[2] - cval / e).abs() < 1e-7);
            for v in &set.directions.vectors {
                assert!(v[2].abs() < 1e-9);
            }
        }
        other => panic!("expected a fiber, got {other:?}"),
    }
    let off = eist_preimage(&sys, &vector(&[0.3, 0.0, cval]), 1.0);
    assert!(matches!(off, Err(Error::NotReachable { .. })), "{off:?}");
}

#[test]
fn h_sets() {
    let sys = rotation(0.5);
    let h = h_set(&sys, &vector(&[1.0, 2.0]), 0.8).unwrap().unwrap();
    assert_eq!(h.dim(), 0);

    let sys = collapse3();
    let tc = 1.0;
    let x0 = vector(&[0.4, -1.1, 0.7]);
    let p = sys.propagate(&x0, tc).unwrap();
    let hp = h_set(&sys, &p, tc).unwrap().unwrap();
    assert_eq!(hp.dim(), 2);
    assert!(hp.distance(&x0) <= 1e-7);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let y = hp.point(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
        assert!((sys.propagate(&y, tc).unwrap() - &p).norm() <= 1e-6 * (1.0 + p.norm()));
    }

    // Evolution: E(T̃) H_{x,T} ⊂ H_{E(T̃)x, T}.
    let x = vector(&[0.0, 0.0, 0.9]);
    let hx = h_set(&sys, &x, tc).unwrap().unwrap();
    for t_tilde in [0.4, 1.7] {
        let e = sys.operator(t_tilde).unwrap();
        let hq = h_set(&sys, &(&e * &x), tc).unwrap().unwrap();
        assert_eq!(hq.dim(), hx.dim());
        for _ in 0..10 {
            let y = hx.point(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            assert!(hq.distance(&(&e * y)) <= 1e-7);
        }
    }
    assert!(h_set(&sys, &vector(&[1.0, 0.0, 0.0]), tc).unwrap().is_none());
}

#[test]
fn inverse_curve_round_trip_and_start() {
    let sys = rotation(0.9);
    let x0 = vector(&[2.0, 1.0]);
    let curve = inverse_curve(&sys, &x0, &linspace(0.0, 3.0, 200)).unwrap();
    assert_eq!(curve.samples[0].1, x0);
    assert!(curve.max_round_trip <= 1e-7);
    let singular = inverse_curve(&collapse2(), &x0, &[0.5, 1.0]);
    assert!(matches!(singular, Err(Error::Singular { .. })));
}

#[test]
fn inverse_curve_near_classical_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = random_matrix(&mut rng, 2, 0.5);
    let sys = FractionalSystem::new(0.999, a.clone()).unwrap();
    let x0 = vector(&[1.0, -0.5]);
    let curve = inverse_curve(&sys, &x0, &linspace(0.0, 1.0, 21)).unwrap();
    for (t, g) in &curve.samples {
        let want = expm(&(&a * -*t)) * &x0;
        assert!((g - &want).norm() <= 0.05 * want.norm(), "t = {t}");
    }
    let v = sys.velocity(&x0, 1.0).unwrap();
    let au = &a * sys.propagate(&x0, 1.0).unwrap();
    assert!((v - &au).norm() <= 0.01 * au.norm());
}

#[test]
fn inverse_curve_evolution() {
    let sys = rotation(0.9);
    let x0 = vector(&[2.0, 1.0]);
    let grid = linspace(0.0, 3.0, 200);
    let same = evolve_inverse_curve(&sys, &x0, 0.0, &grid).unwrap();
    assert_eq!(same.q, x0);
    assert!(same.max_discrepancy == 0.0);
    for t_tilde in [0.5, 1.2] {
        assert!(evolve_inverse_curve(&sys, &x0, t_tilde, &grid).unwrap().max_discrepancy <= 1e-7);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sys = FractionalSystem::new(0.7, random_type_one(&mut rng)).unwrap();
    assert_eq!(classify(&sys, default_search_bound(0.7), 1e-6).unwrap().verdict, Verdict::TypeI);
    let x0 = random_vec(&mut rng, 3);
    assert!(evolve_inverse_curve(&sys, &x0, 0.7, &linspace(0.0, 2.0, 200)).unwrap().max_discrepancy <= 1e-7);
}

#[test]
fn separation_for_type_one() {
    let sys = rotation(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = linspace(0.01, 10.0, 100);
    let ops: Vec<RealMatrix> = grid.iter().map(|&t| sys.operator(t).unwrap()).collect();
    for m in &ops {
        assert!(sigma_min(m).unwrap() > tol_singular(m));
    }
    for _ in 0..100 {
        let (x, y) = (random_vec(&mut rng, 2), random_vec(&mut rng, 2));
        for m in ops.iter().step_by(9) {
            let gap = (m * &x - m * &y).norm();
            assert!(gap >= sigma_min(m).unwrap() * (&x - &y).norm() * (1.0 - 1e-12));
            assert!(gap > 0.0);
        }
    }
}

#[test]
fn eidt_recovers_constructed_pairs() {
    let sys = rotation(0.9);
    let x0 = vector(&[2.0, 1.0]);
    let t_star = 0.83;
    let g = inverse_curve(&sys, &x0, &[t_star]).unwrap().samples[0].1.clone();
    let w = eidt_witness(&sys, &x0, &g, (0.0, 2.0), (0.0, 2.0), DEFAULT_GRID).unwrap().expect("witness");
    assert!(w.t_x0.abs() < 1e-6 && (w.t_x - t_star).abs() < 1e-6, "{w:?}");
    assert!((&w.meeting_point - &x0).norm() <= 1e-6 * (1.0 + x0.norm()));

    let (t_tilde, t_star) = (0.7, 1.3);
    let g = inverse_curve(&sys, &x0, &[t_star]).unwrap().samples[0].1.clone();
    let x = sys.operator(t_tilde).unwrap() * g;
    let all = eidt_witnesses(&sys, &x0, &x, (0.0, 2.0), (0.0, 2.0), DEFAULT_GRID).unwrap();
    assert!(all.iter().any(|w| (w.t_x0 - t_tilde).abs() < 1e-6 && (w.t_x - t_star).abs() < 1e-6), "{all:?}");
    for w in &all {
        let gap = (sys.propagate(&x0, w.t_x0).unwrap() - sys.propagate(&x, w.t_x).unwrap()).norm();
        assert!(gap <= 1e-6 * (1.0 + w.meeting_point.norm()));
        assert!(w.t_x0 != w.t_x);
    }
    for pair in all.windows(2) {
        assert!((pair[0].t_x0, pair[0].t_x) <= (pair[1].t_x0, pair[1].t_x));
    }
}

#[test]
fn eidt_excludes_the_same_time_family() {
    let sys = rotation(0.9);
    let x0 = vector(&[2.0, 1.0]);
    assert!(eidt_witness(&sys, &x0, &x0, (1e-3, 3.0), (1e-3, 3.0), DEFAULT_GRID).unwrap().is_none());
}

#[test]
fn s_cloud_contains_inverse_curve_and_verifies() {
    let sys = rotation(0.9);
    let x0 = vector(&[2.0, 1.0]);
    let cl = classify(&sys, 20.0, 1e-6).unwrap();
    let t0 = linspace(0.0, 1.5, 6);
    let ts = linspace(0.0, 2.0, 15);
    let cloud = sample_s(&sys, &x0, &cl, &t0, &ts, 5).unwrap();
    assert_eq!(cloud.len(), t0.len() * ts.len());
    let gamma = inverse_curve(&sys, &x0, &ts).unwrap();
    for (t, g) in &gamma.samples {
        assert!(cloud.iter().any(|p| p.t_x0 == 0.0 && p.t == *t && (&p.point - g).norm() <= 1e-12 * (1.0 + g.norm())));
    }
    for p in &cloud {
        let a = sys.propagate(&p.point, p.t).unwrap();
        let b = sys.propagate(&x0, p.t_x0).unwrap();
        assert!((a - &b).norm() <= 1e-6 * (1.0 + b.norm()));
    }
}

#[test]
fn s_cloud_adds_collapse_fibers() {
    let sys = collapse3();
    let x0 = vector(&[0.0, 0.0, 1.0]);
    let cl = classify(&sys, default_search_bound(0.5), 1e-6).unwrap();
    let cloud = sample_s(&sys, &x0, &cl, &linspace(0.0, 1.0, 3), &linspace(0.0, 2.0, 9), 3).unwrap();
    let fibers: Vec<_> = cloud.iter().filter(|p| p.fiber).collect();
    assert_eq!(fibers.len(), 3 * 9);
    for p in fibers {
        let a = sys.propagate(&p.point, p.t).unwrap();
        let b = sys.propagate(&x0, p.t_x0).unwrap();
        assert!((a - &b).norm() <= 1e-6 * (1.0 + b.norm()));
    }
    assert!(cloud.iter().all(|p| p.fiber || (p.t - 1.0).abs() >= 1e-3));
}

#[test]
fn velocity_against_difference_quotients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let sys = FractionalSystem::new(rng.gen_range(0.3..0.9), random_matrix(&mut rng, 2, 1.0)).unwrap();
        let x0 = random_vec(&mut rng, 2);
        let h = 1e-5;
        let fd = (sys.propagate(&x0, 1.0 + h).unwrap() - sys.propagate(&x0, 1.0 - h).unwrap()) / (2.0 * h);
        let v = velocity(&sys, &x0, 1.0).unwrap();
        assert!((fd - &v).norm() <= 1e-5 * v.norm());
    }
    assert!(velocity(&rotation(0.5), &vector(&[1.0, 0.0]), 0.0).is_err());
}

#[test]
fn self_intersection_node() {
    // Loop times from an mpmath trace of conj(E_{1/3}(t^{1/3} η₁)) at 40
    // digits: polyline intersection on [0.5, 2], then findroot.
    let sys = third_system(c(2.21095, -1.60243));
    let x0 = vector(&[1.0, 0.0]);
    let pts = multiple_points(&sys, &x0, default_search_bound(1.0 / 3.0)).unwrap();
    assert_eq!(pts.len(), 1, "{pts:?}");
    let mp = &pts[0];
    assert!((mp.t_critical - 1.0).abs() < 1e-9);
    assert_eq!(mp.kind, PointKind::Node);
    assert!(mp.velocity_norm <= 1e-5 * (1.0 + mp.p.norm()));
    let cr = mp.crossing.unwrap();
    assert!((cr.t1 - 0.611_114_927_197).abs() < 1e-6 && (cr.t2 - 0.932_624_376_102).abs() < 1e-6, "{cr:?}");
    assert!(cr.state_gap < 1e-4);
    let (a, b) = (sys.propagate(&x0, cr.t1).unwrap(), sys.propagate(&x0, cr.t2).unwrap());
    assert!((a - b).norm() < 1e-4);
    assert!(solve_trajectory(&sys, &x0, &[0.5]).unwrap().ivp_residual().unwrap().relative <= 5e-3);
}

#[test]
fn self_intersection_cusp() {
    let sys = third_system(c(1.47895, 1.349246));
    let x0 = vector(&[1.0, 0.0]);
    let pts = multiple_points(&sys, &x0, default_search_bound(1.0 / 3.0)).unwrap();
    assert_eq!(pts.len(), 1, "{pts:?}");
    let mp = &pts[0];
    assert!((mp.t_critical - 1.0).abs() < 1e-3);
    assert_eq!(mp.kind, PointKind::Cusp);
    assert!(mp.velocity_norm < 1e-5);
    let h = 1e-5;
    let fd = (sys.propagate(&x0, 1.0 + h).unwrap() - sys.propagate(&x0, 1.0 - h).unwrap()) / (2.0 * h);
    assert!(fd.norm() < 1e-5);
    assert!(solve_trajectory(&sys, &x0, &[0.5]).unwrap().ivp_residual().unwrap().relative <= 5e-3);
}

#[test]
fn smooth_points_are_unresolved() {
    let dp = classify_double_point(&rotation(0.9), &vector(&[2.0, 1.0]), 1.0).unwrap();
    assert_eq!(dp.kind, PointKind::Unresolved);
    assert!(dp.velocity_norm > 1e-2);
    assert!(multiple_points(&rotation(0.9), &vector(&[2.0, 1.0]), 20.0).unwrap().is_empty());
}
