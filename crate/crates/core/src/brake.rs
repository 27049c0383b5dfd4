//! Brake orbits: zero-velocity starts, reflection symmetry, and shooting for
//! periodic brake-to-brake orbits.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, potential_value};
use crate::error::{Error, Result};
use crate::integrate::{
    detect_events, propagate, transverse, ClosestApproach, EventKind, EventSpec, PropagateOptions, Termination,
    Trajectory,
};
use crate::numeric::{nelder_mead, NelderMeadOptions};
use crate::system::{EnergyLevel, MassSystem, State};
use crate::virial::{windowed_averages, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrakeOptions {
    /// Integrate over `[-half_span, half_span]` around the brake instant.
    pub half_span: f64,
    pub tol: f64,
    pub r_min: f64,
    pub sundman: bool,
}

impl Default for BrakeOptions {
    fn default() -> Self {
        BrakeOptions {
            half_span: 5.0,
            tol: 1e-12,
            r_min: dynamics::DEFAULT_R_MIN,
            sundman: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrakeOrbit {
    pub q_star: Vec<f64>,
    pub level: EnergyLevel,
    /// Brake instant is `t = 0`.
    pub traj: Trajectory,
    pub closest: ClosestApproach,
    /// First forward virial crossing, if any.
    pub first_virial_crossing: Option<f64>,
}

impl BrakeOrbit {
    /// Whether the forward branch crosses `U = 2h` before its closest approach.
    pub fn crosses_virial_before_closest(&self) -> bool {
        match self.first_virial_crossing {
            Some(t) => self.closest.t >= 0.0 && t < self.closest.t,
            None => false,
        }
    }
}

/// Integrate from rest at `q_star` in both time directions.
pub fn brake_start(q_star: &[f64], sys: &MassSystem, opts: &BrakeOptions) -> Result<BrakeOrbit> {
    sys.check_config(q_star)?;
    let u = dynamics::potential(sys, q_star)?.finite()?;
    let level = EnergyLevel::new(u)?;
    let mut q = q_star.to_vec();
    sys.remove_center_of_mass(&mut q);
    let s0 = State::at_rest(0.0, q.clone());
    let popts = PropagateOptions {
        tol: opts.tol,
        r_min: opts.r_min,
        sundman: opts.sundman,
        events: EventSpec::default().with_level(level),
        strict_drift: false,
        ..Default::default()
    };
    let fwd = propagate(&s0, sys, opts.half_span, &popts)?;
    let back = propagate(&s0, sys, -opts.half_span, &popts)?;
    let first_virial_crossing = transverse(&fwd.events, EventKind::VirialCrossing).map(|e| e.t).next();
    let closest = if fwd.stats.closest.r <= back.stats.closest.r {
        fwd.stats.closest
    } else {
        back.stats.closest
    };
    let traj = Trajectory::join(back, fwd)?;
    Ok(BrakeOrbit {
        q_star: q,
        level,
        traj,
        closest,
        first_virial_crossing,
    })
}

/// Largest mass-metric distance between `q(s)` and `q(-s)` for `s in (0, t]`.
pub fn verify_brake_symmetry(orbit: &BrakeOrbit, t: f64) -> Result<f64> {
    let (lo, hi) = orbit.traj.span();
    if !(t > 0.0) || -t < lo - 1e-12 || t > hi + 1e-12 {
        return Err(Error::WindowOutOfSpan {
            lo: -t,
            hi: t,
            span_lo: lo,
            span_hi: hi,
        });
    }
    let sys = orbit.traj.sys();
    let mut worst: f64 = 0.0;
    let n = 200;
    for k in 1..=n {
        let s = t * k as f64 / n as f64;
        let a = orbit.traj.state_at(s)?;
        let b = orbit.traj.state_at(-s)?;
        worst = worst.max(sys.distance(&a.q, &b.q));
    }
    Ok(worst)
}

/// Angle between the velocity and the acceleration field at time `t`.
pub fn boundary_angle(orbit: &BrakeOrbit, t: f64) -> Result<f64> {
    let sys = orbit.traj.sys();
    let s = orbit.traj.state_at(t)?;
    let g = dynamics::grad_u(sys, &s.q)?;
    let c = sys.inner(&s.v, &g) / (sys.norm(&s.v) * sys.norm(&g));
    Ok(c.clamp(-1.0, 1.0).acos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootOptions {
    /// Search horizon for the next boundary approach.
    pub t_max: f64,
    /// Minima of K earlier than this are ignored.
    pub t_skip: f64,
    pub tol: f64,
    pub simplex_step: f64,
    pub max_evals: usize,
    /// Residual counted as converged.
    pub residual_tol: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            t_max: 15.0,
            t_skip: 0.05,
            tol: 1e-12,
            simplex_step: 0.05,
            max_evals: 400,
            residual_tol: 1e-9,
        }
    }
}

/// Next boundary approach of a brake start: local minimum of `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryApproach {
    pub t: f64,
    /// `sqrt(K / h)` at the approach.
    pub residual: f64,
}

/// Smallest `sqrt(K/h)` among the local minima of `K` in `(t_skip, t_max]`.
pub fn boundary_residual(q_star: &[f64], sys: &MassSystem, opts: &ShootOptions) -> Result<Option<BoundaryApproach>> {
    let u = potential_value(sys, q_star)?;
    let mut q = q_star.to_vec();
    sys.remove_center_of_mass(&mut q);
    let popts = PropagateOptions {
        tol: opts.tol,
        events: EventSpec {
            kinds: vec![],
            ..Default::default()
        },
        strict_drift: false,
        ..Default::default()
    };
    let traj = propagate(&State::at_rest(0.0, q), sys, opts.t_max, &popts)?;
    let spec = EventSpec {
        kinds: vec![EventKind::BrakeInstant],
        brake_rel: f64::INFINITY,
        ..Default::default()
    };
    let mut best: Option<BoundaryApproach> = None;
    for ev in detect_events(&traj, &spec)? {
        if ev.t <= opts.t_skip {
            continue;
        }
        let k = dynamics::kinetic(sys, &ev.state.v);
        let r = (k / u).sqrt();
        if best.map_or(true, |b| r < b.residual) {
            best = Some(BoundaryApproach { t: ev.t, residual: r });
        }
    }
    Ok(best)
}

/// Unit translation generators.
pub(crate) fn translations(sys: &MassSystem) -> Vec<Vec<f64>> {
    let d = sys.dim();
    (0..d)
        .map(|i| {
            let mut e = vec![0.0; sys.config_len()];
            for a in 0..sys.n_bodies() {
                e[a * d + i] = 1.0;
            }
            e
        })
        .collect()
}

/// Infinitesimal rotations of `q`.
pub(crate) fn rotations(sys: &MassSystem, q: &[f64]) -> Vec<Vec<f64>> {
    let d = sys.dim();
    let gens: Vec<(usize, usize)> = if d == 2 { vec![(0, 1)] } else { vec![(0, 1), (1, 2), (0, 2)] };
    gens.into_iter()
        .map(|(i, j)| {
            let mut r = vec![0.0; sys.config_len()];
            for a in 0..sys.n_bodies() {
                r[a * d + i] = -q[a * d + j];
                r[a * d + j] = q[a * d + i];
            }
            r
        })
        .collect()
}

/// Mass-metric orthonormal basis of the complement of `span(fixed)`.
pub(crate) fn orthonormal_complement(sys: &MassSystem, fixed: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = sys.config_len();
    let mut span: Vec<Vec<f64>> = Vec::new();
    let push = |span: &mut Vec<Vec<f64>>, mut v: Vec<f64>| {
        for b in span.iter() {
            let c = sys.inner(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let nv = sys.norm(&v);
        if nv > 1e-10 {
            v.iter_mut().for_each(|x| *x /= nv);
            span.push(v);
        }
    };
    for v in fixed {
        push(&mut span, v);
    }
    let k = span.len();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        push(&mut span, e);
    }
    span.split_off(k)
}

/// Orthonormal (mass-metric) directions tangent to the shape of `q`: centered,
/// orthogonal to scaling and to infinitesimal rotations.
pub fn shape_directions(sys: &MassSystem, q: &[f64]) -> Vec<Vec<f64>> {
    let mut fixed = translations(sys);
    fixed.push(q.to_vec());
    fixed.extend(rotations(sys, q));
    orthonormal_complement(sys, fixed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicBrakeCandidate {
    pub q_star: Vec<f64>,
    pub residual: f64,
    pub initial_residual: f64,
    /// Twice the time to the matching boundary approach.
    pub period: f64,
    pub converged: bool,
    /// Phase-space distance after one full period (`None` unless converged).
    pub closure: Option<f64>,
    /// `<U> / 2h` over one period.
    pub avg_u_ratio: Option<f64>,
    pub crossings: Option<usize>,
    pub evals: usize,
}

/// Local search over the Hill boundary for a brake start whose orbit returns
/// to the boundary at rest.
pub fn periodic_brake_shoot(
    seed: &[f64],
    sys: &MassSystem,
    level: EnergyLevel,
    opts: &ShootOptions,
) -> Result<PeriodicBrakeCandidate> {
    let h = level.h();
    let u = potential_value(sys, seed)?;
    if (u - h).abs() > 1e-9 * h.max(1.0) {
        return Err(Error::Precondition(format!("seed has U = {u}, not on the boundary U = {h}")));
    }
    let mut base = seed.to_vec();
    sys.remove_center_of_mass(&mut base);
    let dirs = shape_directions(sys, &base);
    let scale = sys.norm(&base);
    let candidate = |x: &[f64]| -> Result<Vec<f64>> {
        let mut q = base.clone();
        for (c, d) in x.iter().zip(&dirs) {
            q.iter_mut().zip(d).for_each(|(a, b)| *a += scale * c * b);
        }
        dynamics::scaled_to_level(sys, &q, h)
    };
    let objective = |x: &[f64]| -> f64 {
        candidate(x)
            .and_then(|q| boundary_residual(&q, sys, opts))
            .ok()
            .flatten()
            .map_or(f64::INFINITY, |b| b.residual)
    };
    let x0 = vec![0.0; dirs.len()];
    let initial_residual = objective(&x0);
    let res = nelder_mead(
        objective,
        &x0,
        opts.simplex_step,
        NelderMeadOptions {
            max_evals: opts.max_evals,
            f_tol: 0.1 * opts.residual_tol,
            x_tol: 1e-12,
        },
    );
    let q_star = candidate(&res.x)?;
    let approach = boundary_residual(&q_star, sys, opts)?;
    let (residual, period) = approach.map_or((f64::INFINITY, f64::NAN), |a| (a.residual, 2.0 * a.t));
    let converged = residual < opts.residual_tol;
    let (closure, avg_u_ratio, crossings) = if converged {
        let v = verify_periodic(&q_star, sys, level, period, opts.tol)?;
        (Some(v.0), Some(v.1), Some(v.2))
    } else {
        (None, None, None)
    };
    Ok(PeriodicBrakeCandidate {
        q_star,
        residual,
        initial_residual,
        period,
        converged,
        closure,
        avg_u_ratio,
        crossings,
        evals: res.evals,
    })
}

/// Re-integrate a brake start over one period: closure distance, `<U>/2h`, crossings.
pub fn verify_periodic(
    q_star: &[f64],
    sys: &MassSystem,
    level: EnergyLevel,
    period: f64,
    tol: f64,
) -> Result<(f64, f64, usize)> {
    let s0 = State::at_rest(0.0, q_star.to_vec());
    let popts = PropagateOptions {
        tol,
        events: EventSpec::only(&[EventKind::VirialCrossing]).with_level(level),
        strict_drift: false,
        ..Default::default()
    };
    let traj = propagate(&s0, sys, period, &popts)?;
    if traj.termination != Termination::Completed {
        return Err(Error::Precondition(format!("re-integration stopped: {:?}", traj.termination)));
    }
    let end = traj.final_state();
    let dq = sys.distance(&end.q, q_star);
    let dv = sys.norm(&end.v);
    let closure = (dq * dq + dv * dv).sqrt();
    let av = windowed_averages(&traj, Window::new(0.0, period))?;
    let crossings = transverse(&traj.events, EventKind::VirialCrossing)
        .filter(|e| e.t > 0.0 && e.t < period)
        .count();
    Ok((closure, av.avg_u / level.virial_value(), crossings))
}

/// One line of a brake-orbit catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub masses: Vec<f64>,
    pub q_star: Vec<f64>,
    pub period: f64,
    pub residual: f64,
    pub avg_u_ratio: Option<f64>,
    pub crossings: Option<usize>,
    pub closest_approach: f64,
}
