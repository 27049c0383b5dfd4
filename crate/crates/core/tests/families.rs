use std::f64::consts::PI;

use proptest::prelude::*;
use virlab_core::dynamics::{accelerations, angular_momentum_norm, energy, moment_of_inertia_cm, potential_value};
use virlab_core::families::*;
use virlab_core::integrate::{propagate, PropagateOptions, Trajectory};
use virlab_core::virial::thickness;
use virlab_core::{EnergyLevel, Error, Execution, MassSystem, State};

fn level(h: f64) -> EnergyLevel {
    EnergyLevel::new(h).unwrap()
}

fn run(sys: &MassSystem, s: &State, t: f64) -> Trajectory {
    let opts = PropagateOptions::with_tol(1e-13).no_events();
    propagate(s, sys, t, &opts).unwrap()
}

/// Largest deviation of `U` and `I` from their initial values at `n` sample times.
fn rigidity(sys: &MassSystem, traj: &Trajectory, n: usize) -> (f64, f64) {
    let (t0, t1) = traj.span();
    let q0 = traj.state_at(t0).unwrap().q;
    let (u0, i0) = (potential_value(sys, &q0).unwrap(), moment_of_inertia_cm(sys, &q0));
    let (mut du, mut di) = (0.0f64, 0.0f64);
    for k in 0..=n {
        let q = traj.state_at(t0 + (t1 - t0) * k as f64 / n as f64).unwrap().q;
        du = du.max((potential_value(sys, &q).unwrap() - u0).abs() / u0);
        di = di.max((moment_of_inertia_cm(sys, &q) - i0).abs() / i0);
    }
    (du, di)
}

#[test]
fn lagrange_triangle_rotates_rigidly_on_the_virial_surface() {
    let sys = MassSystem::equal_masses(3, 2).unwrap();
    let lv = level(1.0);
    let cc = lagrange_configuration(&sys, lv).unwrap();
    assert!(cc.residual < 1e-12 * cc.lambda * sys.norm(&cc.q));
    let s = lagrange_equilateral(&sys, lv).unwrap();
    assert!((potential_value(&sys, &s.q).unwrap() - 2.0).abs() < 1e-12);
    assert!((energy(&sys, &s).unwrap() + 1.0).abs() < 1e-12);
    // equal masses on a triangle of side d rotate at omega^2 = G M / d^3
    let d = (s.q[0] - s.q[2]).hypot(s.q[1] - s.q[3]);
    let omega = (3.0 / d.powi(3)).sqrt();
    assert!((cc.lambda.sqrt() - omega).abs() < 1e-12 * omega);
    let traj = run(&sys, &s, 5.0 * 2.0 * PI / omega);
    let (du, di) = rigidity(&sys, &traj, 500);
    assert!(du < 1e-8 && di < 1e-8, "{du:e} {di:e}");
    assert!(thickness(&traj, lv, None).unwrap().k < 1e-8);
    for k in 0..=100 {
        let q = traj.state_at(traj.span().1 * k as f64 / 100.0).unwrap().q;
        let side = |a: usize, b: usize| (q[2 * a] - q[2 * b]).hypot(q[2 * a + 1] - q[2 * b + 1]);
        let (x, y, z) = (side(0, 1), side(1, 2), side(2, 0));
        assert!((x - y).abs() < 1e-6 * d && (y - z).abs() < 1e-6 * d);
    }
}

#[test]
fn lagrange_is_central_for_unequal_masses() {
    let sys = MassSystem::new(vec![1.0, 2.5, 0.3], 2).unwrap();
    let lv = level(0.7);
    let cc = lagrange_configuration(&sys, lv).unwrap();
    assert!(cc.residual < 1e-10 * cc.lambda * sys.norm(&cc.q));
    let s = relative_equilibrium(&sys, &cc, lv).unwrap();
    assert!((energy(&sys, &s).unwrap() + 0.7).abs() < 1e-12);
    let traj = run(&sys, &s, 3.0 * 2.0 * PI / cc.lambda.sqrt());
    let (du, di) = rigidity(&sys, &traj, 300);
    assert!(du < 1e-8 && di < 1e-8, "{du:e} {di:e}");
}

/// Collinear ratio from the acceleration condition itself: in a central
/// configuration every body's acceleration is `-lambda` times its position,
/// so the ratio of acceleration gap to position gap agrees for both pairs.
fn collinear_oracle(m: [f64; 3]) -> f64 {
    let sys = MassSystem::new(m.to_vec(), 2).unwrap();
    let f = |z: f64| {
        let q = [0.0, 0.0, 1.0, 0.0, 1.0 + z, 0.0];
        let mut a = [0.0; 6];
        accelerations(&sys, &q, &mut a).unwrap();
        (a[2] - a[0]) / 1.0 - (a[4] - a[2]) / z
    };
    let (mut lo, mut hi) = (1e-3, 1e3);
    let flo = f(lo);
    assert!(flo * f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) * flo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn euler_quintic_matches_acceleration_oracle() {
    for m in [[1.0, 1.0, 1.0], [1.0, 2.0, 3.0], [5.0, 0.1, 1.0], [0.2, 7.0, 0.9]] {
        let z = euler_ratio(m[0], m[1], m[2]).unwrap();
        let oracle = collinear_oracle(m);
        assert!((z - oracle).abs() < 1e-10 * oracle, "{m:?}: {z} vs {oracle}");
        assert!(euler_quintic(m[0], m[1], m[2], z).abs() < 1e-9);
    }
    assert!((euler_ratio(1.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn euler_configurations_are_central_and_rotate_rigidly() {
    // equal masses: the mirror symmetry keeps the collinear rotation exact
    let sys = MassSystem::equal_masses(3, 2).unwrap();
    let lv = level(1.0);
    let cc = euler_configuration(&sys, [0, 1, 2], lv).unwrap();
    assert!(cc.residual < 1e-10 * cc.lambda * sys.norm(&cc.q), "{:e}", cc.residual);
    let s = euler_collinear(&sys, [0, 1, 2], lv).unwrap();
    assert!((potential_value(&sys, &s.q).unwrap() - 2.0).abs() < 1e-12);
    assert!((energy(&sys, &s).unwrap() + 1.0).abs() < 1e-12);
    let traj = run(&sys, &s, 5.0 * 2.0 * PI / cc.lambda.sqrt());
    let (du, di) = rigidity(&sys, &traj, 500);
    assert!(du < 1e-8 && di < 1e-8, "{du:e} {di:e}");
}

#[test]
fn unequal_euler_configurations_rotate_rigidly_for_one_period() {
    // unequal-mass collinear solutions are linearly unstable; rounding-level
    // perturbations grow by roughly e^10 per period
    let sys = MassSystem::new(vec![1.0, 2.0, 3.0], 2).unwrap();
    let lv = level(1.0);
    for order in [[0, 1, 2], [1, 2, 0], [2, 0, 1]] {
        let cc = euler_configuration(&sys, order, lv).unwrap();
        assert!(cc.residual < 1e-10 * cc.lambda * sys.norm(&cc.q), "{order:?}: {:e}", cc.residual);
        let s = relative_equilibrium(&sys, &cc, lv).unwrap();
        assert!((potential_value(&sys, &s.q).unwrap() - 2.0).abs() < 1e-12);
        let traj = run(&sys, &s, 2.0 * PI / cc.lambda.sqrt());
        let (du, di) = rigidity(&sys, &traj, 200);
        assert!(du < 1e-8 && di < 1e-8, "{order:?}: {du:e} {di:e}");
    }
}

#[test]
fn euler_orderings_differ_by_middle_body() {
    let sys = MassSystem::new(vec![1.0, 2.0, 3.0], 2).unwrap();
    let lv = level(1.0);
    let shapes: Vec<f64> = [[0, 1, 2], [1, 2, 0], [2, 0, 1]]
        .iter()
        .map(|&o| moment_of_inertia_cm(&sys, &euler_configuration(&sys, o, lv).unwrap().q))
        .collect();
    for a in 0..3 {
        for b in 0..a {
            assert!((shapes[a] - shapes[b]).abs() > 1e-6, "{shapes:?}");
        }
    }
    // reversing the line gives the same configuration up to reflection
    let i_fwd = moment_of_inertia_cm(&sys, &euler_configuration(&sys, [0, 1, 2], lv).unwrap().q);
    let i_rev = moment_of_inertia_cm(&sys, &euler_configuration(&sys, [2, 1, 0], lv).unwrap().q);
    assert!((i_fwd - i_rev).abs() < 1e-12 * i_fwd);
    assert!(euler_configuration(&sys, [0, 0, 2], lv).is_err());
}

#[test]
fn non_central_configuration_has_a_residual() {
    let sys = MassSystem::equal_masses(3, 2).unwrap();
    let cc = CentralConfiguration::new(&sys, &[0.0, 0.0, 1.0, 0.0, 0.3, 0.8]).unwrap();
    assert!(cc.residual > 1e-2);
}

fn lagrange_family() -> (MassSystem, CentralConfiguration, EnergyLevel) {
    let sys = MassSystem::new(vec![1.0, 1.5, 0.5], 2).unwrap();
    let lv = level(1.0);
    let cc = lagrange_configuration(&sys, lv).unwrap();
    (sys, cc, lv)
}

#[test]
fn homographic_extremes() {
    let (sys, cc, lv) = lagrange_family();
    let el = kepler_elements(&sys, &cc, 0.0, lv).unwrap();
    // the relative equilibrium carries the family's largest angular momentum
    let re = relative_equilibrium(&sys, &cc, lv).unwrap();
    let j_re = angular_momentum_norm(&sys, &re);
    assert!((j_re - el.j_max).abs() < 1e-10 * el.j_max);

    let (orb, _) = homographic_orbit(&sys, &cc, el.j_max, lv, 1e-13).unwrap();
    assert!(orb.k.abs() < 1e-7 && orb.measured_k < 1e-7, "{} {}", orb.k, orb.measured_k);
    assert!(orb.endpoints_achieved);

    let (orb, traj) = homographic_orbit(&sys, &cc, 0.0, lv, 1e-13).unwrap();
    assert_eq!(orb.k, 1.0);
    assert!(orb.u_range.1.is_infinite());
    assert!(orb.endpoints_achieved, "{:?}", traj.termination);
    assert!(orb.measured_k > 1.0 - 1e-6);
    assert!(kepler_elements(&sys, &cc, 1.01 * el.j_max, lv).is_err());
}

#[test]
fn homographic_range_matches_kepler_closed_form() {
    let (sys, cc, lv) = lagrange_family();
    let j_max = kepler_elements(&sys, &cc, 0.0, lv).unwrap().j_max;
    for f in [0.3, 0.6, 0.9, 0.99] {
        let (orb, traj) = homographic_orbit(&sys, &cc, f * j_max, lv, 1e-13).unwrap();
        // scale-factor ellipse: r ranges over a(1 -+ e), U = U_hat / r
        let el = orb.elements;
        let lo = el.u_hat / (el.semi_major * (1.0 + el.eccentricity));
        let hi = el.u_hat / (el.semi_major * (1.0 - el.eccentricity));
        assert!((orb.measured.0 - lo).abs() < 1e-6 * lo, "{f}: {:?} vs {lo}", orb.measured);
        assert!((orb.measured.1 - hi).abs() < 1e-6 * hi, "{f}: {:?} vs {hi}", orb.measured);
        assert!(orb.endpoints_achieved);
        assert!((orb.measured_k - orb.k).abs() < 1e-6);
        // the shape stays central along the orbit
        let mid = traj.state_at(0.37 * el.period).unwrap();
        assert!(CentralConfiguration::new(&sys, &mid.q).unwrap().residual < 1e-6 * sys.norm(&mid.q).powi(-2));
        assert!((angular_momentum_norm(&sys, &mid) - f * j_max).abs() < 1e-9 * j_max);
    }
}

#[test]
fn euler_family_range_matches_kepler_closed_form() {
    let sys = MassSystem::new(vec![1.0, 2.0, 3.0], 2).unwrap();
    let lv = level(2.0);
    let cc = euler_configuration(&sys, [0, 1, 2], lv).unwrap();
    let j_max = kepler_elements(&sys, &cc, 0.0, lv).unwrap().j_max;
    let (orb, _) = homographic_orbit(&sys, &cc, 0.5 * j_max, lv, 1e-13).unwrap();
    assert!(orb.endpoints_achieved, "{:?} vs {:?}", orb.measured, orb.u_range);
    assert!((orb.k - 0.75f64.sqrt()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homographic_k_decreases_with_angular_momentum(a in 0.0f64..1.0, b in 0.0f64..1.0, h in 0.1f64..10.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let (sys, cc, _) = lagrange_family();
        let lv = level(h);
        let j_max = kepler_elements(&sys, &cc, 0.0, lv).unwrap().j_max;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let k_lo = homographic_k(&sys, &cc, lo * j_max, lv).unwrap();
        let k_hi = homographic_k(&sys, &cc, hi * j_max, lv).unwrap();
        prop_assert!(k_hi < k_lo);
        prop_assert!((0.0..=1.0).contains(&k_lo) && (0.0..=1.0).contains(&k_hi));
    }
}

#[test]
fn relative_equilibrium_is_a_turn_around_with_zero_acceleration() {
    let (sys, cc, lv) = lagrange_family();
    let s = relative_equilibrium(&sys, &cc, lv).unwrap();
    let c = birkhoff_moeckel_check(&s, &sys, EnergyNormalization::Standard, 1e-12).unwrap();
    assert!(c.i_ddot.abs() < 1e-12);
    assert!(!c.hypothesis);
    assert!(c.holds);
    // with E = -2h the same state satisfies the hypothesis with I'' = 0
    let c = birkhoff_moeckel_check(&s, &sys, EnergyNormalization::Moeckel, 1e-12).unwrap();
    assert!((c.threshold - 2.0 * c.i0).abs() < 1e-10 * c.i0);
    assert!(c.hypothesis && !c.conclusion && !c.holds);
    assert!(c.i_ddot.abs() < 1e-12);
}

#[test]
fn moving_state_is_not_a_turn_around() {
    let (sys, cc, lv) = lagrange_family();
    let mut s = relative_equilibrium(&sys, &cc, lv).unwrap();
    for (v, q) in s.v.iter_mut().zip(&s.q) {
        *v += 0.1 * q;
    }
    match birkhoff_moeckel_check(&s, &sys, EnergyNormalization::Standard, 1e-9) {
        Err(Error::Precondition(_)) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn standard_normalization_ensemble_has_no_violations() {
    let sys = MassSystem::new(vec![1.0, 2.0, 3.0], 2).unwrap();
    let ens = birkhoff_moeckel_ensemble(&sys, EnergyNormalization::Standard, 300, 100_000, 7, Execution::Parallel).unwrap();
    assert_eq!(ens.passing.len(), 300);
    assert!(ens.violations.is_empty(), "{:?}", ens.violations);
    for (i, c) in &ens.passing {
        let s = ensemble_state(&sys, 7, *i).unwrap();
        // Sundman: J^2 <= 2 I K, so under the hypothesis K > h and I'' = 4K - 2U > 0
        let k = virlab_core::dynamics::kinetic(&sys, &s.v);
        assert!(c.j2 <= 2.0 * c.i0 * k * (1.0 + 1e-12));
        assert!((c.i_ddot - (4.0 * k - 2.0 * (k - c.energy))).abs() < 1e-9 * (k - c.energy));
    }
}

#[test]
fn ensemble_is_independent_of_execution_mode() {
    let sys = MassSystem::equal_masses(3, 2).unwrap();
    let a = birkhoff_moeckel_ensemble(&sys, EnergyNormalization::Moeckel, 40, 20_000, 3, Execution::Parallel).unwrap();
    let b = birkhoff_moeckel_ensemble(&sys, EnergyNormalization::Moeckel, 40, 20_000, 3, Execution::Sequential).unwrap();
    assert_eq!(a, b);
}

#[test]
fn moeckel_normalization_violations_lie_in_a_potential_band() {
    let sys = MassSystem::new(vec![1.0, 2.0, 3.0], 2).unwrap();
    let ens = birkhoff_moeckel_ensemble(&sys, EnergyNormalization::Moeckel, 300, 100_000, 11, Execution::Parallel).unwrap();
    for &v in &ens.violations {
        let c = ens.passing[v].1;
        // with E = -2h, J^2 <= 2IK turns the hypothesis into K > h, and
        // I'' = 2K - 4h <= 0 needs K <= 2h, so U = K + 2h lies in (3h, 4h]
        let k = (c.i_ddot - 2.0 * c.energy) / 2.0;
        let u = k - c.energy;
        assert!(u > 3.0 * c.h * (1.0 - 1e-9) && u <= 4.0 * c.h * (1.0 + 1e-9), "U = {u}, h = {}", c.h);
    }
    println!("E = -2h: {} violations among {} passing states", ens.violations.len(), ens.passing.len());
}

#[test]
fn escape_scan_reports_consistent_rows() {
    let sys = MassSystem::new(vec![1.0, 2.0, 3.0], 2).unwrap();
    let ens = birkhoff_moeckel_ensemble(&sys, EnergyNormalization::Standard, 6, 10_000, 5, Execution::Parallel).unwrap();
    let states: Vec<_> = ens
        .passing
        .iter()
        .map(|(i, c)| (*i, ensemble_state(&sys, 5, *i).unwrap(), *c))
        .collect();
    let scan = escape_scan(&sys, &states, 50.0, 1e-11, Execution::Parallel);
    assert_eq!(scan.rows.len(), 6);
    assert!((0.0..=1.0).contains(&scan.monotone_fraction));
    let monotone = scan.rows.iter().filter(|r| r.monotone_both).count();
    assert_eq!(scan.monotone_fraction, monotone as f64 / 6.0);
    for r in &scan.rows {
        for c in [r.c_forward, r.c_backward].into_iter().flatten() {
            assert!(c > 0.0);
        }
    }
}

fn iso_sys() -> MassSystem {
    MassSystem::new(vec![1.0, 1.0, 0.5], 3).unwrap()
}

fn iso_start() -> IsoscelesState {
    IsoscelesState {
        t: 0.0,
        rho: 0.5,
        zeta: 1.0,
        rho_dot: 0.05,
        zeta_dot: 0.2,
        phi: 0.3,
        j: (0.5f64).sqrt(),
    }
}

#[test]
fn isosceles_embed_reduce_round_trip() {
    let sys = iso_sys();
    let s = iso_start();
    let full = isosceles_embed(&sys, &s).unwrap();
    let back = isosceles_reduce(&sys, &full, 1e-12).unwrap();
    for (a, b) in [
        (s.rho, back.rho),
        (s.zeta, back.zeta),
        (s.rho_dot, back.rho_dot),
        (s.zeta_dot, back.zeta_dot),
        (s.phi, back.phi),
        (s.j, back.j),
    ] {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
    assert!((isosceles_energy(&sys, &s).unwrap() - energy(&sys, &full).unwrap()).abs() < 1e-14);
    assert!((isosceles_potential(&sys, s.rho, s.zeta).unwrap() - potential_value(&sys, &full.q).unwrap()).abs() < 1e-14);
    assert!((angular_momentum_norm(&sys, &full) - s.j).abs() < 1e-14);
}

#[test]
fn asymmetric_state_is_rejected() {
    let sys = iso_sys();
    let mut full = isosceles_embed(&sys, &iso_start()).unwrap();
    full.q[6] += 1e-3;
    match isosceles_reduce(&sys, &full, 1e-9) {
        Err(Error::SymmetryViolated { deviation, .. }) => assert!(deviation > 1e-4),
        other => panic!("{other:?}"),
    }
    assert!(isosceles_reduce(&MassSystem::new(vec![1.0, 2.0, 0.5], 3).unwrap(), &full, 1e-3).is_err());
}

#[test]
fn reduced_flow_matches_full_flow() {
    let sys = iso_sys();
    let s0 = iso_start();
    let times: Vec<f64> = (1..=20).map(|k| 5.0 * k as f64).collect();
    let reduced = isosceles_propagate(&sys, &s0, &times, 1e-13).unwrap();
    let full = run(&sys, &isosceles_embed(&sys, &s0).unwrap(), 100.0);
    let e0 = isosceles_energy(&sys, &s0).unwrap();
    for (t, r) in times.iter().zip(&reduced) {
        let f = full.state_at(*t).unwrap();
        // the full flow keeps the symmetry
        let fr = isosceles_reduce(&sys, &f, 1e-8).unwrap();
        let emb = isosceles_embed(&sys, r).unwrap();
        let gap = emb.q.iter().zip(&f.q).chain(emb.v.iter().zip(&f.v)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-8, "t = {t}: {gap:e}");
        assert!((fr.j - s0.j).abs() < 1e-10);
        assert!((isosceles_energy(&sys, r).unwrap() - e0).abs() < 1e-10 * e0.abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reduction_commutes_with_the_flow(
        rho in 0.4f64..1.5,
        zeta in -2.0f64..2.0,
        rho_dot in -0.2f64..0.2,
        zeta_dot in -0.3f64..0.3,
        phi in -3.0f64..3.0,
        jf in 0.5f64..1.5,
    ) {
        let sys = iso_sys();
        let s0 = IsoscelesState { t: 0.0, rho, zeta, rho_dot, zeta_dot, phi, j: jf * (rho).sqrt() };
        let r = isosceles_propagate(&sys, &s0, &[2.0], 1e-13).unwrap()[0];
        let opts = PropagateOptions::with_tol(1e-13).no_events();
        let f = propagate(&isosceles_embed(&sys, &s0).unwrap(), &sys, 2.0, &opts).unwrap();
        let fr = isosceles_reduce(&sys, &f.state_at(2.0).unwrap(), 1e-8).unwrap();
        prop_assert!((fr.rho - r.rho).abs() < 1e-8);
        prop_assert!((fr.zeta - r.zeta).abs() < 1e-8);
        prop_assert!((fr.zeta_dot - r.zeta_dot).abs() < 1e-8);
        prop_assert!((fr.j - r.j).abs() < 1e-10);
    }
}

#[test]
fn op5_scan_smoke() {
    let sys = iso_sys();
    let mut opts = Op5Options::new(1.0, level(0.2));
    opts.n_seeds = 8;
    opts.horizon = 40.0;
    let a = op5_scan(&sys, &opts, Execution::Parallel).unwrap();
    let b = op5_scan(&sys, &opts, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.evidence, "candidate");
    assert_eq!(a.threshold, 2.0);
    assert_eq!(a.candidates.len() + a.skipped, 8);
    for c in &a.candidates {
        assert!((isosceles_energy(&sys, &c.start).unwrap() + 0.2).abs() < 1e-9);
        assert!(c.forward.min_u <= isosceles_potential(&sys, c.start.rho, c.start.zeta).unwrap());
        assert_eq!(c.above_throughout, c.forward.min_u >= a.threshold && c.backward.min_u >= a.threshold);
    }
    for w in a.candidates.windows(2) {
        assert!(w[0].both_escape >= w[1].both_escape);
    }
    opts.threshold = UThreshold::BinaryLimit;
    assert_eq!(op5_scan(&sys, &opts, Execution::Sequential).unwrap().threshold, 0.5);
}
