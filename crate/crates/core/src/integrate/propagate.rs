use serde::{Deserialize, Serialize};

use super::dop853::{Dop853, OdeSystem, StepControl};
use super::events::{self, detect_events, Event, EventFns, EventKind, EventSpec, RunState};
use super::trajectory::{ClosestApproach, RunStats, Segment, Termination, Trajectory};
use crate::dynamics::{self, DEFAULT_R_MIN};
use crate::error::{Error, Result};
use crate::system::{MassSystem, State};

/// Newton's equations in first-order form over `y = [q, v, t]`.
///
/// With `sundman`, the independent variable is `tau` with `dt/dtau = min r_ab`.
pub struct NBodyOde<'a> {
    sys: &'a MassSystem,
    sundman: bool,
}

impl<'a> NBodyOde<'a> {
    pub fn new(sys: &'a MassSystem, sundman: bool) -> Self {
        NBodyOde { sys, sundman }
    }
}

impl OdeSystem for NBodyOde<'_> {
    fn dim(&self) -> usize {
        2 * self.sys.config_len() + 1
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.sys.config_len();
        let (q, rest) = y.split_at(n);
        let v = &rest[..n];
        let (dq, drest) = dy.split_at_mut(n);
        let (dv, dt) = drest.split_at_mut(n);
        dynamics::accelerations(self.sys, q, dv)?;
        let s = if self.sundman { self.sys.min_pair_distance(q).0 } else { 1.0 };
        for i in 0..n {
            dq[i] = s * v[i];
            dv[i] *= s;
        }
        dt[0] = s;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagateOptions {
    /// Relative and absolute local error tolerance.
    pub tol: f64,
    pub max_steps: usize,
    /// Hard stop when some pair comes closer than this.
    pub r_min: f64,
    pub sundman: bool,
    pub events: EventSpec,
    /// Kinds that stop the run at their first root.
    pub terminal: Vec<EventKind>,
    /// Direction filter for terminal roots (0 = either).
    pub terminal_direction: i8,
    /// Fail with an error when the energy drift leaves the budget.
    pub strict_drift: bool,
    pub h_max: Option<f64>,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            tol: 1e-12,
            max_steps: 500_000,
            r_min: DEFAULT_R_MIN,
            sundman: false,
            events: EventSpec::default(),
            terminal: Vec::new(),
            terminal_direction: 0,
            strict_drift: true,
            h_max: None,
        }
    }
}

impl PropagateOptions {
    pub fn with_tol(tol: f64) -> Self {
        PropagateOptions {
            tol,
            ..Default::default()
        }
    }

    pub fn no_events(mut self) -> Self {
        self.events.kinds.clear();
        self
    }
}

/// Drift allowance after `steps` accepted steps.
pub fn energy_drift_budget(tol: f64, steps: usize, e0: f64, u: f64) -> f64 {
    100.0 * tol * (steps.max(1) as f64) * e0.abs().max(u)
}

/// Integrate Newton's equations from `s0` to `t_final` (either direction).
pub fn propagate(s0: &State, sys: &MassSystem, t_final: f64, opts: &PropagateOptions) -> Result<Trajectory> {
    s0.validate(sys)?;
    if t_final == s0.t || !t_final.is_finite() {
        return Err(Error::invalid("t_final must differ from the initial time"));
    }
    let (r0, pair0) = sys.min_pair_distance(&s0.q);
    if r0 <= opts.r_min {
        return Err(Error::Collision {
            a: pair0.0,
            b: pair0.1,
        });
    }
    let n = sys.config_len();
    let e0 = dynamics::energy(sys, s0)?;
    let j0 = dynamics::angular_momentum(sys, s0);
    let p0 = dynamics::linear_momentum(sys, &s0.v);
    let dir = (t_final - s0.t).signum();

    let ode = NBodyOde::new(sys, opts.sundman);
    let mut y0 = Vec::with_capacity(2 * n + 1);
    y0.extend_from_slice(&s0.q);
    y0.extend_from_slice(&s0.v);
    y0.push(s0.t);
    let mut ctl = StepControl::with_tol(opts.tol);
    ctl.h_max = opts.h_max;
    // in Sundman time the span in tau is unknown; bound it generously and stop on t
    let tau_limit = if opts.sundman { f64::INFINITY * dir } else { t_final };
    let mut stepper = Dop853::new(&ode, s0.t, y0, dir, ctl)?;

    let mut segments: Vec<Segment> = Vec::new();
    let mut stats = RunStats {
        closest: ClosestApproach {
            t: s0.t,
            r: r0,
            pair: pair0,
        },
        ..Default::default()
    };
    let mut termination = Termination::Completed;
    let mut terminal_event: Option<Event> = None;
    let mut fns = EventFns::new(sys, &opts.events, e0);
    let mut term_runs = vec![RunState::default(); opts.terminal.len()];
    let mut drift_error = None;
    let mut y = vec![0.0; 2 * n + 1];

    loop {
        let t_now = stepper.y()[2 * n];
        if (t_final - t_now) * dir <= 0.0 {
            break;
        }
        if stats.steps >= opts.max_steps {
            termination = Termination::MaxSteps;
            break;
        }
        let lim = if opts.sundman { tau_limit_for(&stepper, dir) } else { tau_limit };
        let step = match stepper.step(lim) {
            Ok(s) => s,
            Err(Error::Precondition(_)) => {
                termination = Termination::StepUnderflow;
                break;
            }
            Err(e) => return Err(e),
        };
        stats.steps += 1;
        let mut seg = Segment::from_dense(step, !opts.sundman);

        // Sundman: cut the final step at t_final
        if opts.sundman && (seg.t1 - t_final) * dir > 0.0 && (seg.t0 - t_final) * dir < 0.0 {
            seg = clip_segment(seg, t_final, dir);
        }

        // collision proximity hard stop and closest approach on the step grid
        let mut hit = None;
        for k in 0..=8 {
            let u = if dir > 0.0 { k as f64 / 8.0 } else { 1.0 - k as f64 / 8.0 };
            seg.eval_u(u, &mut y);
            let (r, pair) = sys.min_pair_distance(&y[..n]);
            if r < stats.closest.r {
                stats.closest = ClosestApproach { t: y[2 * n], r, pair };
            }
            if r <= opts.r_min {
                hit = Some(u);
                break;
            }
        }
        if let Some(u_hit) = hit {
            let seg = truncate_at_proximity(seg, sys, opts.r_min, u_hit, dir);
            segments.push(seg);
            termination = Termination::CollisionProximity;
            break;
        }

        // terminal events
        let mut stop_at: Option<Event> = None;
        for (i, &kind) in opts.terminal.iter().enumerate() {
            if !fns.applies(kind) {
                continue;
            }
            let mut found = Vec::new();
            events::detect_in_segment(&mut fns, kind, &seg, &mut term_runs[i], &mut found);
            let mut cands = found.into_iter().filter(|e| {
                !e.degenerate
                    && (opts.terminal_direction == 0 || e.direction == opts.terminal_direction)
                    && (e.t - s0.t) * dir > 0.0
            });
            let first = if dir > 0.0 { cands.next() } else { cands.last() };
            if let Some(ev) = first {
                let better = stop_at.as_ref().map_or(true, |s| (ev.t - s.t) * dir < 0.0);
                if better {
                    stop_at = Some(ev);
                }
            }
        }

        // energy drift at the step end
        let end = if dir > 0.0 { 1.0 } else { 0.0 };
        let st_end = seg.state_at_u(end, n);
        let u_end = dynamics::potential_value(sys, &st_end.q)?;
        let drift = (dynamics::kinetic(sys, &st_end.v) - u_end - e0).abs();
        stats.max_energy_drift = stats.max_energy_drift.max(drift);
        let jd = dynamics::angular_momentum(sys, &st_end)
            .iter()
            .zip(&j0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let pd = dynamics::linear_momentum(sys, &st_end.v)
            .iter()
            .zip(&p0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        stats.max_momentum_drift = stats.max_momentum_drift.max(jd.max(pd));
        let budget = energy_drift_budget(opts.tol, stats.steps, e0, u_end);
        if let Some(ev) = stop_at {
            let seg = clip_segment(seg, ev.t, dir);
            segments.push(seg);
            terminal_event = Some(ev);
            termination = Termination::TerminalEvent;
            break;
        }
        segments.push(seg);
        if drift > budget {
            termination = Termination::DriftBudgetExceeded;
            drift_error = Some(Error::DriftBudgetExceeded {
                t: st_end.t,
                drift,
                budget,
            });
            break;
        }
    }
    stats.rejected = stepper.rejected;
    stats.evaluations = stepper.evaluations;
    if let (true, Some(e)) = (opts.strict_drift, drift_error) {
        return Err(e);
    }
    if segments.is_empty() {
        return Err(Error::Precondition("no step could be taken".into()));
    }

    let mut traj = Trajectory::from_parts(sys.clone(), segments, Vec::new(), opts.tol, termination, stats, e0);
    let mut evs = detect_events(&traj, &opts.events)?;
    if let Some(te) = terminal_event {
        evs.retain(|e| !(e.kind == te.kind && (e.t - te.t).abs() <= 1e-9 * (1.0 + te.t.abs())));
        evs.push(te);
        evs.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    traj.events = evs;
    Ok(traj)
}

fn tau_limit_for<S: OdeSystem>(stepper: &Dop853<S>, dir: f64) -> f64 {
    stepper.tau() + dir * 1e300
}

/// Shorten a segment so it ends (in the integration direction) at time `t_cut`.
fn clip_segment(seg: Segment, t_cut: f64, dir: f64) -> Segment {
    if dir > 0.0 {
        seg.restrict(seg.t0, t_cut)
    } else {
        seg.restrict(t_cut, seg.t1)
    }
}

fn truncate_at_proximity(seg: Segment, sys: &MassSystem, r_min: f64, u_hit: f64, dir: f64) -> Segment {
    let n = sys.config_len();
    let mut y = vec![0.0; 2 * n + 1];
    let u_prev = if dir > 0.0 { (u_hit - 0.125).max(0.0) } else { (u_hit + 0.125).min(1.0) };
    let mut f = |u: f64| {
        seg.eval_u(u, &mut y);
        sys.min_pair_distance(&y[..n]).0 - r_min
    };
    let u_cut = crate::numeric::bisect(&mut f, u_prev, u_hit, 1e-14).unwrap_or(u_prev);
    let st = seg.state_at_u(u_cut, n);
    clip_segment(seg, st.t, dir)
}
