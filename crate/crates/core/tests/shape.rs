use proptest::prelude::*;
use virlab_core::brake::{periodic_brake_shoot, ShootOptions};
use virlab_core::dynamics::{moment_of_inertia_cm, potential_value, scaled_to_level};
use virlab_core::families::{euler_collinear, lagrange_equilateral};
use virlab_core::integrate::{propagate, PropagateOptions, Termination, Trajectory};
use virlab_core::shape::*;
use virlab_core::{EnergyLevel, Execution, MassSystem, State};

fn equal() -> MassSystem {
    MassSystem::equal_masses(3, 2).unwrap()
}

fn unequal() -> MassSystem {
    MassSystem::new(vec![1.0, 2.0, 0.5], 2).unwrap()
}

fn rotate(q: &[f64], th: f64) -> Vec<f64> {
    let (s, c) = th.sin_cos();
    q.chunks(2).flat_map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect()
}

/// Twice the signed area of the triangle.
fn signed_area(q: &[f64]) -> f64 {
    (q[2] - q[0]) * (q[5] - q[1]) - (q[3] - q[1]) * (q[4] - q[0])
}

#[test]
fn equilateral_triangles_are_poles() {
    let s = 3f64.sqrt() / 2.0;
    let sys = equal();
    for q in [[0.0, 0.0, 1.0, 0.0, 0.5, s], [0.0, 0.0, 0.5, s, 1.0, 0.0]] {
        let p = shape_project(&sys, &q).unwrap();
        assert!((p.latitude().abs() - 1.0).abs() < 1e-12, "{:?}", p.w);
    }
    // orientation picks the hemisphere
    let a = shape_project(&equal(), &[0.0, 0.0, 1.0, 0.0, 0.5, s]).unwrap();
    let b = shape_project(&equal(), &[0.0, 0.0, 1.0, 0.0, 0.5, -s]).unwrap();
    assert!(a.latitude() * b.latitude() < 0.0);
}

#[test]
fn collinear_configurations_are_equatorial() {
    for sys in [equal(), unequal()] {
        let p = shape_project(&sys, &[0.3, 0.6, 1.3, 1.1, -0.5, 0.2]).unwrap();
        assert!(p.w[2].abs() < 1e-15);
        let p = shape_project(&sys, &[0.0, 0.0, 1.0, 0.5, 0.25, 0.3]).unwrap();
        assert!(p.w[2].abs() > 1e-3);
    }
}

#[test]
fn binary_collisions_lie_on_their_rays() {
    let r12 = collision_ray(&equal(), 0, 1).unwrap();
    assert!((r12[0] + 1.0).abs() < 1e-15 && r12[1].abs() < 1e-15 && r12[2].abs() < 1e-15);
    for sys in [equal(), unequal()] {
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            let ray = collision_ray(&sys, a, b).unwrap();
            assert!(ray[2].abs() < 1e-15);
            let mut q = vec![0.3, -0.2, 1.4, 0.7, -0.9, 0.4];
            q[2 * b] = q[2 * a];
            q[2 * b + 1] = q[2 * a + 1];
            let p = shape_project(&sys, &q).unwrap();
            let n = (p.w[0] * p.w[0] + p.w[1] * p.w[1] + p.w[2] * p.w[2]).sqrt();
            for k in 0..3 {
                assert!((p.w[k] / n - ray[k]).abs() < 1e-12, "{a}{b}: {:?} vs {ray:?}", p.w);
            }
        }
    }
    // equal masses: the three rays are 120 degrees apart
    let sys = equal();
    let rays: Vec<[f64; 3]> = [(0, 1), (1, 2), (0, 2)].iter().map(|&(a, b)| collision_ray(&sys, a, b).unwrap()).collect();
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        let d: f64 = (0..3).map(|k| rays[i][k] * rays[j][k]).sum();
        assert!((d + 0.5).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn projection_is_invariant_under_rigid_motions(
        q in prop::array::uniform6(-2.0f64..2.0),
        th in -3.2f64..3.2,
        dx in -5.0f64..5.0,
        dy in -5.0f64..5.0,
    ) {
        let sys = unequal();
        let p = shape_project(&sys, &q).unwrap();
        let mut moved = rotate(&q, th);
        moved.chunks_mut(2).for_each(|b| { b[0] += dx; b[1] += dy; });
        let pm = shape_project(&sys, &moved).unwrap();
        let scale = moment_of_inertia_cm(&sys, &q).max(1e-12);
        for k in 0..3 {
            prop_assert!((p.w[k] - pm.w[k]).abs() < 1e-12 * scale.max(1.0));
        }
        // |w| = I/2 and r = sqrt(I)
        let n = (p.w[0] * p.w[0] + p.w[1] * p.w[1] + p.w[2] * p.w[2]).sqrt();
        prop_assert!((n - 0.5 * scale).abs() < 1e-12 * scale.max(1.0));
        prop_assert!((p.r * p.r - scale).abs() < 1e-12 * scale.max(1.0));
        // latitude is the normalized signed area
        prop_assert!(p.w[2] * signed_area(&q) >= 0.0);
    }

    #[test]
    fn reflection_flips_the_hemisphere(q in prop::array::uniform6(-2.0f64..2.0)) {
        let sys = equal();
        let p = shape_project(&sys, &q).unwrap();
        let mirrored: Vec<f64> = q.chunks(2).flat_map(|b| [b[0], -b[1]]).collect();
        let pm = shape_project(&sys, &mirrored).unwrap();
        prop_assert!((p.w[0] - pm.w[0]).abs() < 1e-12);
        prop_assert!((p.w[1] - pm.w[1]).abs() < 1e-12);
        prop_assert!((p.w[2] + pm.w[2]).abs() < 1e-12);
    }
}

fn run(sys: &MassSystem, s: &State, t: f64, tol: f64) -> Trajectory {
    let opts = PropagateOptions {
        strict_drift: false,
        ..PropagateOptions::with_tol(tol).no_events()
    };
    propagate(s, sys, t, &opts).unwrap()
}

#[test]
fn lagrange_orbit_has_an_empty_word() {
    let sys = equal();
    let s = lagrange_equilateral(&sys, EnergyLevel::new(1.0).unwrap()).unwrap();
    let w = syzygy_sequence(&run(&sys, &s, 20.0, 1e-12), &SyzygyOptions::default()).unwrap();
    assert!(w.events.is_empty() && !w.degenerate && !w.truncated);
}

#[test]
fn euler_orbit_is_degenerate() {
    let sys = equal();
    let s = euler_collinear(&sys, [0, 1, 2], EnergyLevel::new(1.0).unwrap()).unwrap();
    let w = syzygy_sequence(&run(&sys, &s, 20.0, 1e-12), &SyzygyOptions::default()).unwrap();
    assert!(w.degenerate);
    assert!(w.events.is_empty());
}

fn figure_like() -> (MassSystem, State) {
    let sys = unequal();
    let q = vec![-1.0, 0.1, 1.0, -0.2, 0.1, 0.8];
    let v = vec![0.1, 0.4, -0.2, -0.3, 0.3, 0.2];
    (sys.clone(), State::new(0.0, q, v).centered(&sys))
}

#[test]
fn syzygy_events_are_collinear_with_the_right_middle_body() {
    let (sys, s) = figure_like();
    let traj = run(&sys, &s, 30.0, 1e-12);
    let w = syzygy_sequence(&traj, &SyzygyOptions::default()).unwrap();
    assert!(w.events.len() >= 4, "{}", w.word());
    for pair in w.events.windows(2) {
        assert!(pair[1].t > pair[0].t);
    }
    for e in &w.events {
        let q = traj.state_at(e.t).unwrap().q;
        let scale = moment_of_inertia_cm(&sys, &q);
        assert!(signed_area(&q).abs() < 1e-10 * scale);
        // middle body by ordering the projections onto the line
        let (dx, dy) = (q[2] - q[0], q[3] - q[1]);
        let (dx, dy) = if dx.hypot(dy) > 1e-6 { (dx, dy) } else { (q[4] - q[0], q[5] - q[1]) };
        let mut proj: Vec<(f64, u8)> = (0..3).map(|a| (q[2 * a] * dx + q[2 * a + 1] * dy, a as u8 + 1)).collect();
        proj.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(e.symbol, proj[1].1);
    }
    // consecutive crossings alternate hemisphere
    let lat = |t: f64| shape_project(&sys, &traj.state_at(t).unwrap().q).unwrap().latitude();
    for pair in w.events.windows(2) {
        let mid = 0.5 * (pair[0].t + pair[1].t);
        let before = lat(pair[0].t - 1e-6);
        assert!(before * lat(mid) < 0.0);
    }
}

#[test]
fn word_is_invariant_under_resampling() {
    let (sys, s) = figure_like();
    let coarse = syzygy_sequence(&run(&sys, &s, 30.0, 1e-10), &SyzygyOptions::default()).unwrap();
    let fine = syzygy_sequence(&run(&sys, &s, 30.0, 1e-13), &SyzygyOptions::default()).unwrap();
    let dense = syzygy_sequence(
        &run(&sys, &s, 30.0, 1e-13),
        &SyzygyOptions {
            samples_per_segment: 32,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(coarse.word(), fine.word());
    assert_eq!(fine.word(), dense.word());
    for (a, b) in coarse.events.iter().zip(&fine.events) {
        assert!((a.t - b.t).abs() < 1e-3);
    }
}

#[test]
fn collision_truncates_the_word() {
    let sys = equal();
    let q = scaled_to_level(&sys, &[-0.5, 0.0, 0.5, 0.0, 0.0, 0.3], 1.0).unwrap();
    let traj = run(&sys, &State::at_rest(0.0, q), 50.0, 1e-12);
    assert_eq!(traj.termination, Termination::CollisionProximity);
    let w = syzygy_sequence(&traj, &SyzygyOptions::default()).unwrap();
    assert!(w.truncated);
}

#[test]
fn periodic_brake_orbit_word_squares_over_two_periods() {
    let sys = equal();
    let level = EnergyLevel::new(1.0).unwrap();
    let seed = scaled_to_level(&sys, &[-0.5, 0.0, 0.5, 0.0, 0.0, 0.3], 1.0).unwrap();
    let c = periodic_brake_shoot(&seed, &sys, level, &ShootOptions::default()).unwrap();
    assert!(c.converged);
    let s = State::at_rest(0.0, c.q_star.clone());
    let one = syzygy_sequence(&run(&sys, &s, c.period, 1e-13), &SyzygyOptions::default()).unwrap();
    let two = syzygy_sequence(&run(&sys, &s, 2.0 * c.period, 1e-13), &SyzygyOptions::default()).unwrap();
    assert!(!one.events.is_empty());
    assert_eq!(two.word(), one.word().repeat(2), "{} / {}", one.word(), two.word());
    for (a, b) in one.events.iter().zip(&two.events[one.events.len()..]) {
        assert!((b.t - a.t - c.period).abs() < 1e-3);
    }
}

fn mesh_error(sys: &MassSystem, m: &HillMesh) -> f64 {
    m.vertices
        .iter()
        .map(|x| (potential_value(sys, &shape_lift(sys, x).unwrap()).unwrap() - m.level).abs() / m.level)
        .fold(0.0, f64::max)
}

#[test]
fn hill_meshes_sit_on_their_level_sets() {
    let sys = unequal();
    let meshes = hill_mesh(&sys, EnergyLevel::new(1.0).unwrap(), 48, 1.5, Execution::Parallel).unwrap();
    for m in [&meshes.boundary, &meshes.virial] {
        assert!(m.faces.len() > 1000);
        let err = mesh_error(&sys, m);
        assert!(err < 0.05, "level {}: {err}", m.level);
    }
    // vertices lie on U = h, so U = h/(2h) times 2h on the virial mesh scaled by 2
    assert_eq!(meshes.boundary.level, 1.0);
    assert_eq!(meshes.virial.level, 2.0);
}

#[test]
fn mesh_error_shrinks_with_resolution() {
    let sys = equal();
    let coarse = isosurface(&sys, 1.0, 24, 1.5, Execution::Parallel).unwrap();
    let fine = isosurface(&sys, 1.0, 96, 1.5, Execution::Parallel).unwrap();
    // interpolation error of the vertices is second order away from the collision rays
    let mean = |m: &HillMesh| {
        let errs: Vec<f64> = m
            .vertices
            .iter()
            .map(|x| (potential_value(&sys, &shape_lift(&sys, x).unwrap()).unwrap() - 1.0).abs())
            .collect();
        errs.iter().sum::<f64>() / errs.len() as f64
    };
    assert!(mean(&fine) < 0.2 * mean(&coarse), "{} {}", mean(&fine), mean(&coarse));
}

#[test]
fn boundary_mesh_has_three_pipes_along_the_collision_rays() {
    let sys = equal();
    let m = isosurface(&sys, 1.0, 64, 3.0, Execution::Parallel).unwrap();
    let rays: Vec<[f64; 3]> = [(0, 1), (1, 2), (0, 2)].iter().map(|&(a, b)| collision_ray(&sys, a, b).unwrap()).collect();
    let mut hits = [0usize; 3];
    for v in &m.vertices {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r < 0.9 * m.half_width {
            continue;
        }
        // far vertices hug one of the rays
        let (best, cos) = rays
            .iter()
            .enumerate()
            .map(|(i, d)| (i, (d[0] * v[0] + d[1] * v[1] + d[2] * v[2]) / r))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        assert!(cos > 0.9, "vertex {v:?} is far from every collision ray");
        hits[best] += 1;
    }
    assert!(hits.iter().all(|&h| h > 10), "{hits:?}");
    // the virial surface is the Hill boundary at half size
    let virial = isosurface(&sys, 2.0, 64, 3.0, Execution::Parallel).unwrap();
    assert_eq!(virial.vertices.len(), m.vertices.len());
    assert_eq!(virial.faces, m.faces);
    for (a, b) in virial.vertices.iter().zip(&m.vertices) {
        for k in 0..3 {
            assert!((a[k] - 0.5 * b[k]).abs() < 1e-12 * m.half_width);
        }
    }
}

#[test]
fn equal_mass_mesh_has_threefold_symmetry() {
    let sys = equal();
    let m = isosurface(&sys, 1.0, 48, 1.5, Execution::Sequential).unwrap();
    let (s, c) = (2.0 * std::f64::consts::PI / 3.0).sin_cos();
    let u = |x: &[f64; 3]| potential_value(&sys, &shape_lift(&sys, x).unwrap()).unwrap();
    let base = mesh_error(&sys, &m);
    for v in &m.vertices {
        for (sn, cs) in [(s, c), (-s, c)] {
            let r = [cs * v[0] - sn * v[1], sn * v[0] + cs * v[1], v[2]];
            // the field is invariant, so the rotated vertex is as close to the level as the original
            assert!((u(&r) - u(v)).abs() < 1e-9 * u(v));
        }
    }
    assert!(base < 0.05);
}

#[test]
fn mesh_is_deterministic_across_execution_modes() {
    let sys = unequal();
    let a = isosurface(&sys, 1.0, 32, 1.5, Execution::Parallel).unwrap();
    let b = isosurface(&sys, 1.0, 32, 1.5, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_obj(), b.to_obj());
    // every edge borders at most two faces
    let mut count = std::collections::HashMap::new();
    for f in &a.faces {
        for (i, j) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            *count.entry((i.min(j), i.max(j))).or_insert(0) += 1;
        }
    }
    assert!(count.values().all(|&n| n <= 2));
    assert!(isosurface(&sys, 1.0, 2, 1.5, Execution::Parallel).is_err());
    assert!(isosurface(&sys, 1.0, 10_000, 1.5, Execution::Parallel).is_err());
}

#[test]
fn obj_export_round_trips() {
    let sys = equal();
    let m = isosurface(&sys, 1.0, 16, 1.5, Execution::Parallel).unwrap();
    let text = m.to_obj();
    let verts: Vec<[f64; 3]> = text
        .lines()
        .filter_map(|l| l.strip_prefix("v "))
        .map(|l| {
            let v: Vec<f64> = l.split(' ').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    assert_eq!(verts, m.vertices);
    assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), m.faces.len());
    assert_eq!(m.to_csv().lines().count(), m.vertices.len() + 1);
}
