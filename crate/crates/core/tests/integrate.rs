mod common;

use common::*;
use virlab_core::dynamics::{energy, kinetic, lagrange_jacobi_rhs, moment_of_inertia};
use virlab_core::integrate::{
    collar_scan, collar_start, detect_events, hill_collar_exit_time, propagate, transverse, CollarOptions, EventKind,
    EventSpec, PropagateOptions, Termination, Trajectory,
};
use virlab_core::{EnergyLevel, Error, Execution, MassSystem, State};

fn pair() -> MassSystem {
    MassSystem::equal_masses(2, 2).unwrap()
}

#[test]
fn circular_orbit_matches_closed_form() {
    let sys = pair();
    let k = kepler_for(&sys, 1.0, 0.0);
    let s0 = two_body_state(&sys, &k, 0.0);
    let tf = 10.0 * k.period();
    let traj = propagate(&s0, &sys, tf, &PropagateOptions::default()).unwrap();
    assert_eq!(traj.termination, Termination::Completed);
    let mut worst: f64 = 0.0;
    for i in 0..=200 {
        let t = tf * i as f64 / 200.0;
        let s = traj.state_at(t).unwrap();
        let o = two_body_state(&sys, &k, t);
        worst = worst.max(sys.distance(&s.q, &o.q));
    }
    assert!(worst < 1e-6, "position error {worst}");
    assert!(traj.stats.max_energy_drift < 1e-9);
    let e = energy(&sys, &traj.final_state()).unwrap();
    assert!((e - two_body_energy(&sys, 1.0)).abs() < 1e-9);
}

#[test]
fn eccentric_orbit_has_two_virial_crossings_per_period() {
    let sys = pair();
    let k = kepler_for(&sys, 1.0, 0.5);
    let s0 = two_body_state(&sys, &k, 0.0);
    let p = k.period();
    let traj = propagate(&s0, &sys, 3.0 * p, &PropagateOptions::default()).unwrap();
    let n = transverse(&traj.events, EventKind::VirialCrossing).count();
    assert_eq!(n, 6);
    for ev in transverse(&traj.events, EventKind::VirialCrossing) {
        assert!(ev.residual.abs() < 1e-10, "{}", ev.residual);
    }
    // turn-arounds at peri- and apoapsis
    let ta = transverse(&traj.events, EventKind::TurnAround).count();
    assert!((6..=7).contains(&ta), "{ta}");
}

#[test]
fn circular_orbit_has_only_degenerate_virial_contact() {
    let sys = pair();
    let k = kepler_for(&sys, 1.0, 0.0);
    let traj = propagate(&two_body_state(&sys, &k, 0.0), &sys, 3.0 * k.period(), &PropagateOptions::default()).unwrap();
    assert_eq!(transverse(&traj.events, EventKind::VirialCrossing).count(), 0);
    assert!(traj
        .events
        .iter()
        .any(|e| e.kind == EventKind::VirialCrossing && e.degenerate));
}

#[test]
fn brake_start_logs_brake_instant_at_start() {
    let sys = MassSystem::equal_masses(3, 2).unwrap();
    let q = vec![-1.0, 0.0, 1.0, 0.2, 0.3, 1.1];
    let s0 = State::at_rest(0.0, q).centered(&sys);
    let traj = propagate(&s0, &sys, 0.5, &PropagateOptions::default()).unwrap();
    let first = traj.events.iter().find(|e| e.kind == EventKind::BrakeInstant).unwrap();
    assert_eq!(first.t, 0.0);
    assert_eq!(kinetic(&sys, &first.state.v), 0.0);
}

#[test]
fn forward_then_backward_returns_to_start() {
    let sys = MassSystem::new(vec![1.0, 0.8, 1.3], 2).unwrap();
    let s0 = State::new(0.0, vec![1.0, 0.0, -0.5, 0.8, -0.4, -0.9], vec![0.1, 0.5, -0.6, 0.1, 0.3, -0.4]).centered(&sys);
    let opts = PropagateOptions::default().no_events();
    let fwd = propagate(&s0, &sys, 5.0, &opts).unwrap();
    let back = propagate(&fwd.final_state(), &sys, 0.0, &opts).unwrap();
    let s1 = back.initial_state();
    assert!((s1.t - 0.0).abs() < 1e-12);
    assert!(sys.distance(&s1.q, &s0.q) < 1e-6);
    assert!(sys.distance(&s1.v, &s0.v) < 1e-6);
}

#[test]
fn time_reversal_reproduces_path() {
    let sys = MassSystem::new(vec![1.0, 0.8, 1.3], 2).unwrap();
    let s0 = State::new(0.0, vec![1.0, 0.0, -0.5, 0.8, -0.4, -0.9], vec![0.1, 0.5, -0.6, 0.1, 0.3, -0.4]).centered(&sys);
    let opts = PropagateOptions::default().no_events();
    let fwd = propagate(&s0, &sys, 3.0, &opts).unwrap();
    let rev = propagate(&s0.reversed(), &sys, -3.0, &opts).unwrap();
    for i in 1..=30 {
        let t = 0.1 * i as f64;
        let a = fwd.state_at(t).unwrap();
        let b = rev.state_at(-t).unwrap();
        assert!(sys.distance(&a.q, &b.q) < 1e-8);
    }
}

#[test]
fn two_body_free_fall_collides_at_closed_form_time() {
    let sys = pair();
    let r0 = 2.0;
    let s0 = State::at_rest(0.0, vec![-1.0, 0.0, 1.0, 0.0]);
    let traj = propagate(&s0, &sys, 10.0, &PropagateOptions::default()).unwrap();
    assert_eq!(traj.termination, Termination::CollisionProximity);
    let tc = free_fall_time(2.0, r0);
    let (_, t_end) = traj.span();
    assert!((t_end - tc).abs() < 1e-6, "{t_end} vs {tc}");
    assert!(traj.stats.closest.r < 1e-7);
    assert!(traj.events.iter().any(|e| e.kind == EventKind::CollisionProximity && e.direction == -1));
}

#[test]
fn sundman_time_reaches_closer_approach() {
    let sys = pair();
    let s0 = State::at_rest(0.0, vec![-1.0, 0.0, 1.0, 0.0]);
    let opts = PropagateOptions {
        sundman: true,
        r_min: 1e-10,
        ..PropagateOptions::default().no_events()
    };
    let traj = propagate(&s0, &sys, 10.0, &opts).unwrap();
    let tc = free_fall_time(2.0, 2.0);
    let (_, t_end) = traj.span();
    assert!((t_end - tc).abs() < 1e-8, "{t_end} vs {tc}");
    let mid = traj.state_at(0.5 * tc).unwrap();
    assert!(mid.q[2] > 0.0 && mid.q[2] < 1.0);
}

#[test]
fn second_difference_of_inertia_matches_lagrange_jacobi() {
    let sys = pair();
    let k = kepler_for(&sys, 1.0, 0.6);
    let traj = propagate(&two_body_state(&sys, &k, 0.0), &sys, k.period(), &PropagateOptions::default()).unwrap();
    for seg in traj.segments().iter().step_by(7) {
        let t = 0.5 * (seg.t0 + seg.t1);
        let d = 0.1 * seg.duration();
        let i = |t: f64| moment_of_inertia(&sys, &traj.state_at(t).unwrap().q);
        let dd = |d: f64| (i(t + d) - 2.0 * i(t) + i(t - d)) / (d * d);
        // Richardson step removes the O(d^2) stencil error
        let ddi = (4.0 * dd(0.5 * d) - dd(d)) / 3.0;
        let rhs = lagrange_jacobi_rhs(&sys, &traj.state_at(t).unwrap()).unwrap();
        assert!((ddi - rhs).abs() <= 1e-5 * rhs.abs().max(1.0), "{ddi} vs {rhs}");
    }
}

#[test]
fn events_can_be_recomputed_from_samples() {
    let sys = pair();
    let k = kepler_for(&sys, 1.0, 0.4);
    let p = k.period();
    let samples: Vec<State> = (0..=400).map(|i| two_body_state(&sys, &k, 2.0 * p * i as f64 / 400.0)).collect();
    let traj = Trajectory::from_samples(&sys, &samples, 1e-12).unwrap();
    let h = -two_body_energy(&sys, 1.0);
    let spec = EventSpec::only(&[EventKind::VirialCrossing]).with_level(EnergyLevel::new(h).unwrap());
    let evs = detect_events(&traj, &spec).unwrap();
    assert_eq!(transverse(&evs, EventKind::VirialCrossing).count(), 4);
    let mid = traj.state_at(0.37 * p).unwrap();
    let o = two_body_state(&sys, &k, 0.37 * p);
    assert!(sys.distance(&mid.q, &o.q) < 1e-7);
}

#[test]
fn immediate_collision_is_rejected() {
    let sys = pair();
    let s0 = State::at_rest(0.0, vec![0.0, 0.0, 0.0, 0.0]);
    assert!(propagate(&s0, &sys, 1.0, &PropagateOptions::default()).is_err());
}

/// Equal unit masses on the x axis at separation `r`, separating at rate `rdot`.
fn radial_pair(r: f64, rdot: f64) -> State {
    State::new(0.0, vec![-0.5 * r, 0.0, 0.5 * r, 0.0], vec![-0.5 * rdot, 0.0, 0.5 * rdot, 0.0])
}

#[test]
fn radial_collar_exit_matches_free_fall_time() {
    let sys = pair();
    let level = EnergyLevel::new(1.0).unwrap();
    // U = 1/r, so the boundary sits at r = 1 and mu = 2
    let opts = CollarOptions::default();
    for (eps, xi) in [(1e-2, 0.5), (1e-3, 0.3), (1e-4, 0.9)] {
        let r1 = 1.0 / (1.0 + xi * eps);
        let r2 = 1.0 / (1.0 + opts.multiplier * eps);
        let speed = (4.0 * (1.0 / r1 - 1.0)).sqrt();
        for sign in [-1.0, 1.0] {
            let s0 = radial_pair(r1, sign * speed);
            let ex = hill_collar_exit_time(&s0, &sys, level, eps, &opts).unwrap();
            let (a, b) = (radial_fall_time(2.0, 1.0, r1), radial_fall_time(2.0, 1.0, r2));
            let expect = if sign < 0.0 { b - a } else { a + b };
            let t = ex.exit_time.unwrap();
            assert!((t - expect).abs() < 1e-8, "eps {eps} sign {sign}: {t} vs {expect}");
            assert!(ex.du_dt > 0.0);
        }
    }
}

#[test]
fn collar_exit_time_vanishes_with_the_width() {
    let sys = MassSystem::equal_masses(3, 2).unwrap();
    let level = EnergyLevel::new(1.0).unwrap();
    let opts = CollarOptions::default();
    let times: Vec<f64> = [1e-2, 1e-4, 1e-6]
        .iter()
        .map(|&eps| {
            let s0 = collar_start(&sys, level, eps, 3, 0).unwrap();
            hill_collar_exit_time(&s0, &sys, level, eps, &opts).unwrap().exit_time.unwrap()
        })
        .collect();
    assert!(times[0] > times[1] && times[1] > times[2], "{times:?}");
    assert!(times[2] < 1e-2, "{times:?}");
}

#[test]
fn collar_ensemble_scales_as_square_root() {
    let sys = MassSystem::equal_masses(3, 2).unwrap();
    let level = EnergyLevel::new(1.0).unwrap();
    let eps = [1e-3, 2.5e-4];
    let rows = collar_scan(&sys, level, &eps, 64, 11, &CollarOptions::default(), Execution::Sequential).unwrap();
    for r in &rows {
        assert_eq!(r.exited, r.total);
        // transverse exits: dU/dt stays well away from zero on the sqrt(eps) scale
        assert!(r.min_abs_du_dt > 1e-3 * r.eps.sqrt(), "{r:?}");
    }
    let ratio = rows[0].median_exit / rows[1].median_exit;
    assert!((ratio / 2.0 - 1.0).abs() < 0.2, "{ratio}");
    let par = collar_scan(&sys, level, &eps, 64, 11, &CollarOptions::default(), Execution::Parallel).unwrap();
    assert_eq!(rows, par);
}

#[test]
fn collar_start_rejects_states_outside_the_band() {
    let sys = MassSystem::equal_masses(3, 2).unwrap();
    let level = EnergyLevel::new(1.0).unwrap();
    let s0 = collar_start(&sys, level, 1e-3, 0, 0).unwrap();
    let r = hill_collar_exit_time(&s0, &sys, level, 1e-5, &CollarOptions::default());
    assert!(matches!(r, Err(Error::Precondition(_))), "{r:?}");
}

#[test]
fn collar_run_without_exit_is_a_candidate_not_an_error() {
    let sys = MassSystem::equal_masses(3, 2).unwrap();
    let level = EnergyLevel::new(1.0).unwrap();
    let s0 = collar_start(&sys, level, 1e-2, 0, 1).unwrap();
    let opts = CollarOptions {
        max_time: 1e-6,
        ..Default::default()
    };
    let ex = hill_collar_exit_time(&s0, &sys, level, 1e-2, &opts).unwrap();
    assert!(ex.exit_time.is_none());
    assert_eq!(ex.termination, Termination::Completed);
}
