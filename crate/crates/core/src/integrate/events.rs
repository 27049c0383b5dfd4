use serde::{Deserialize, Serialize};

use super::trajectory::{Segment, Trajectory};
use crate::dynamics;
use crate::error::Result;
use crate::numeric::brent_root;
use crate::system::{EnergyLevel, MassSystem, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    BrakeInstant,
    VirialCrossing,
    TurnAround,
    CollisionProximity,
    HillBandExit,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::BrakeInstant,
        EventKind::VirialCrossing,
        EventKind::TurnAround,
        EventKind::CollisionProximity,
        EventKind::HillBandExit,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
    pub state: State,
    /// Sign of d(event function)/dt at the root; 0 for degenerate runs.
    pub direction: i8,
    /// Tangential contact or event function identically near zero.
    pub degenerate: bool,
    /// Event function value at `t`, relative to its natural scale.
    pub residual: f64,
}

/// Which event functions to track and their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kinds: Vec<EventKind>,
    /// Level for virial crossings and brake thresholds; taken from the energy when absent.
    pub level: Option<EnergyLevel>,
    pub r_prox: f64,
    /// Level value `c` for `U - c` exit events.
    pub hill_value: Option<f64>,
    /// Brake instants need `K < brake_rel * h`.
    pub brake_rel: f64,
    /// Event function counted as identically zero below `flat_rel * scale`.
    pub flat_rel: f64,
    /// Root flagged tangential when `|f'| t_dyn < degenerate_rel * scale`.
    pub degenerate_rel: f64,
}

impl Default for EventSpec {
    fn default() -> Self {
        EventSpec {
            kinds: vec![
                EventKind::BrakeInstant,
                EventKind::VirialCrossing,
                EventKind::TurnAround,
                EventKind::CollisionProximity,
            ],
            level: None,
            r_prox: 1e-3,
            hill_value: None,
            brake_rel: 1e-12,
            flat_rel: 1e-8,
            degenerate_rel: 1e-6,
        }
    }
}

impl EventSpec {
    pub fn only(kinds: &[EventKind]) -> Self {
        EventSpec {
            kinds: kinds.to_vec(),
            ..Default::default()
        }
    }

    pub fn with_level(mut self, level: EnergyLevel) -> Self {
        self.level = Some(level);
        self
    }
}

pub(crate) struct EventFns<'a> {
    sys: &'a MassSystem,
    spec: &'a EventSpec,
    h: Option<f64>,
    acc: Vec<f64>,
}

impl<'a> EventFns<'a> {
    pub(crate) fn new(sys: &'a MassSystem, spec: &'a EventSpec, energy: f64) -> Self {
        let h = spec.level.map(|l| l.h()).or(if energy < 0.0 { Some(-energy) } else { None });
        EventFns {
            sys,
            spec,
            h,
            acc: vec![0.0; sys.config_len()],
        }
    }

    pub(crate) fn applies(&self, kind: EventKind) -> bool {
        match kind {
            EventKind::VirialCrossing => self.h.is_some(),
            EventKind::HillBandExit => self.spec.hill_value.is_some(),
            _ => true,
        }
    }

    /// Event function value and its natural scale; NaN at collision.
    pub(crate) fn eval(&mut self, kind: EventKind, q: &[f64], v: &[f64]) -> (f64, f64) {
        let sys = self.sys;
        let u = dynamics::potential_unchecked(sys, q);
        if u.is_collision() {
            return (f64::NAN, 1.0);
        }
        let u = u.value();
        match kind {
            EventKind::VirialCrossing => {
                let c = 2.0 * self.h.unwrap_or(f64::NAN);
                (u - c, c)
            }
            EventKind::HillBandExit => {
                let c = self.spec.hill_value.unwrap_or(f64::NAN);
                (u - c, c.abs())
            }
            EventKind::TurnAround => {
                let i = dynamics::moment_of_inertia_cm(sys, q);
                (dynamics::i_dot(sys, q, v), (i * u).sqrt())
            }
            EventKind::BrakeInstant => {
                if dynamics::accelerations(sys, q, &mut self.acc).is_err() {
                    return (f64::NAN, 1.0);
                }
                let dk = sys.inner(v, &self.acc);
                let i = dynamics::moment_of_inertia_cm(sys, q).max(f64::MIN_POSITIVE);
                (dk, u * (u / i).sqrt())
            }
            EventKind::CollisionProximity => {
                let (r, _) = sys.min_pair_distance(q);
                (r - self.spec.r_prox, self.spec.r_prox)
            }
        }
    }

    fn t_dyn(&self, q: &[f64]) -> f64 {
        let u = dynamics::potential_unchecked(self.sys, q).value();
        (dynamics::moment_of_inertia_cm(self.sys, q) / u).sqrt()
    }

    fn brake_ok(&self, q: &[f64], v: &[f64]) -> bool {
        let k = dynamics::kinetic(self.sys, v);
        let scale = self
            .h
            .unwrap_or_else(|| dynamics::potential_unchecked(self.sys, q).value());
        k < self.spec.brake_rel * scale
    }
}

const GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Per-kind state carried across consecutive segments.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RunState {
    in_flat: bool,
}

fn eval_at(fns: &mut EventFns, kind: EventKind, seg: &Segment, u: f64, y: &mut [f64], n: usize) -> (f64, f64) {
    seg.eval_u(u, y);
    let (q, rest) = y.split_at(n);
    fns.eval(kind, q, &rest[..n])
}

/// Roots of one event function on one segment, appended to `out` in time order.
pub(crate) fn detect_in_segment(
    fns: &mut EventFns,
    kind: EventKind,
    seg: &Segment,
    run: &mut RunState,
    out: &mut Vec<Event>,
) {
    let n = fns.sys.config_len();
    let mut y = vec![0.0; 2 * n + 1];
    let mut vals = [0.0; 5];
    let mut scale: f64 = 0.0;
    for (k, &u) in GRID.iter().enumerate() {
        let (f, s) = eval_at(fns, kind, seg, u, &mut y, n);
        vals[k] = f;
        scale = scale.max(s);
    }
    if vals.iter().any(|f| !f.is_finite()) {
        return;
    }
    let flat = vals.iter().all(|f| f.abs() < fns.spec.flat_rel * scale);
    if flat {
        if !run.in_flat {
            let s = seg.state_at_u(0.0, n);
            let (f, sc) = fns.eval(kind, &s.q, &s.v);
            out.push(Event {
                kind,
                t: s.t,
                state: s,
                direction: 0,
                degenerate: true,
                residual: f / sc,
            });
        }
        run.in_flat = true;
        return;
    }
    run.in_flat = false;
    for k in 0..4 {
        let (fa, fb) = (vals[k], vals[k + 1]);
        // zero counts as positive so a root exactly on a grid point is reported once
        let (pa, pb) = (fa >= 0.0, fb >= 0.0);
        if pa == pb {
            continue;
        }
        let (ua, ub) = (GRID[k], GRID[k + 1]);
        let root = {
            let mut g = |u: f64| eval_at(fns, kind, seg, u, &mut y, n).0;
            if fb == 0.0 {
                Ok(ub)
            } else {
                brent_root(&mut g, ua, ub, 1e-15, 200)
            }
        };
        let Ok(u) = root else { continue };
        let mut st = seg.state_at_u(u, n);
        if kind == EventKind::BrakeInstant && (!pb || !fns.brake_ok(&st.q, &st.v)) {
            continue;
        }
        let (f, sc) = fns.eval(kind, &st.q, &st.v);
        // slope by central difference in u, converted to time
        let du = 1e-4;
        let (u0, u1) = ((u - du).max(0.0), (u + du).min(1.0));
        let f0 = eval_at(fns, kind, seg, u0, &mut y, n).0;
        let f1 = eval_at(fns, kind, seg, u1, &mut y, n).0;
        let slope = (f1 - f0) / ((u1 - u0) * seg.duration());
        let degenerate = slope.abs() * fns.t_dyn(&st.q) < fns.spec.degenerate_rel * sc;
        st.t = seg.state_at_u(u, n).t;
        out.push(Event {
            kind,
            t: st.t,
            state: st,
            direction: if pb { 1 } else { -1 },
            degenerate,
            residual: f / sc,
        });
    }
}

/// All roots of the selected event functions over the trajectory span, in time order.
pub fn detect_events(traj: &Trajectory, spec: &EventSpec) -> Result<Vec<Event>> {
    let sys = traj.sys();
    let mut fns = EventFns::new(sys, spec, traj.e0);
    let mut out = Vec::new();
    for &kind in &spec.kinds {
        if !fns.applies(kind) {
            continue;
        }
        let mut run = RunState::default();
        for seg in traj.segments() {
            detect_in_segment(&mut fns, kind, seg, &mut run, &mut out);
        }
        if kind == EventKind::BrakeInstant {
            let s0 = traj.initial_state();
            if s0.v.iter().all(|x| *x == 0.0) {
                out.push(Event {
                    kind,
                    t: s0.t,
                    state: s0,
                    direction: 0,
                    degenerate: false,
                    residual: 0.0,
                });
            }
        }
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    dedup(&mut out);
    Ok(out)
}

pub(crate) fn dedup(events: &mut Vec<Event>) {
    let mut keep: Vec<Event> = Vec::with_capacity(events.len());
    for ev in events.drain(..) {
        let dup = keep
            .iter()
            .rev()
            .take(8)
            .any(|x| x.kind == ev.kind && (x.t - ev.t).abs() <= 1e-10 * (1.0 + ev.t.abs()));
        if !dup {
            keep.push(ev);
        }
    }
    *events = keep;
}

/// Transverse (non-degenerate) events of one kind.
pub fn transverse(events: &[Event], kind: EventKind) -> impl Iterator<Item = &Event> {
    events.iter().filter(move |e| e.kind == kind && !e.degenerate)
}
