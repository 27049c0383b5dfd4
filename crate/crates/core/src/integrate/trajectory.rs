use serde::{Deserialize, Serialize};

use super::dop853::DenseStep;
use super::events::Event;
use crate::dynamics;
use crate::error::{Error, Result};
use crate::system::{MassSystem, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    CollisionProximity,
    StepUnderflow,
    MaxSteps,
    DriftBudgetExceeded,
    TerminalEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosestApproach {
    pub t: f64,
    pub r: f64,
    pub pair: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub max_energy_drift: f64,
    pub max_momentum_drift: f64,
    pub closest: ClosestApproach,
}

impl Default for RunStats {
    fn default() -> Self {
        RunStats {
            steps: 0,
            rejected: 0,
            evaluations: 0,
            max_energy_drift: 0.0,
            max_momentum_drift: 0.0,
            closest: ClosestApproach {
                t: f64::NAN,
                r: f64::INFINITY,
                pair: (0, 1),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Hermite {
    q0: Vec<f64>,
    v0: Vec<f64>,
    a0: Vec<f64>,
    q1: Vec<f64>,
    v1: Vec<f64>,
    a1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Interp {
    /// Integrator step over `y = [q, v, t]`; `linear_time` when `t` is the step variable.
    Dense { step: DenseStep, linear_time: bool },
    Hermite(Hermite),
}

/// One interpolation interval `[t0, t1]` with `t0 < t1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    reversed: bool,
    /// Sub-window `[ua, ub]` of the underlying interpolant, in its time-increasing fraction.
    ua: f64,
    ub: f64,
    raw_t0: f64,
    raw_t1: f64,
    interp: Interp,
}

impl Segment {
    pub(crate) fn from_dense(step: DenseStep, linear_time: bool) -> Self {
        let n = step.dim();
        let ta = step.start()[n - 1];
        let tb = step.eval_component(1.0, n - 1);
        let (t0, t1, reversed) = if tb >= ta { (ta, tb, false) } else { (tb, ta, true) };
        Segment {
            t0,
            t1,
            reversed,
            ua: 0.0,
            ub: 1.0,
            raw_t0: t0,
            raw_t1: t1,
            interp: Interp::Dense { step, linear_time },
        }
    }

    /// Quintic Hermite interval between two sampled states.
    pub fn hermite(sys: &MassSystem, a: &State, b: &State) -> Result<Self> {
        if !(b.t > a.t) {
            return Err(Error::invalid("sample times must be strictly increasing"));
        }
        let n = sys.config_len();
        let mut a0 = vec![0.0; n];
        let mut a1 = vec![0.0; n];
        dynamics::accelerations(sys, &a.q, &mut a0)?;
        dynamics::accelerations(sys, &b.q, &mut a1)?;
        Ok(Segment {
            t0: a.t,
            t1: b.t,
            reversed: false,
            ua: 0.0,
            ub: 1.0,
            raw_t0: a.t,
            raw_t1: b.t,
            interp: Interp::Hermite(Hermite {
                q0: a.q.clone(),
                v0: a.v.clone(),
                a0,
                q1: b.q.clone(),
                v1: b.v.clone(),
                a1,
            }),
        })
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Restrict to `[lo, hi]` within the current interval.
    pub(crate) fn restrict(&self, lo: f64, hi: f64) -> Segment {
        let lo = lo.clamp(self.t0, self.t1);
        let hi = hi.clamp(lo, self.t1);
        let ra = self.raw_u_at(lo);
        let rb = self.raw_u_at(hi);
        Segment {
            t0: lo,
            t1: hi,
            ua: ra,
            ub: rb,
            ..self.clone()
        }
    }

    /// Evaluate `[q, v, t]` at fraction `u` of the interval (increasing in time).
    pub fn eval_u(&self, u: f64, y: &mut [f64]) {
        self.raw_eval(self.ua + u * (self.ub - self.ua), y);
    }

    fn raw_eval(&self, u: f64, y: &mut [f64]) {
        match &self.interp {
            Interp::Dense { step, .. } => {
                let th = if self.reversed { 1.0 - u } else { u };
                step.eval(th, y);
            }
            Interp::Hermite(hm) => {
                let n = hm.q0.len();
                let dt = self.raw_t1 - self.raw_t0;
                let s = u;
                let (s2, s3) = (s * s, s * s * s);
                let (s4, s5) = (s3 * s, s3 * s2);
                let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
                let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
                let h2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
                let h3 = 0.5 * s3 - s4 + 0.5 * s5;
                let h4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
                let h5 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
                let d0 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
                let d1 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
                let d2 = s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4;
                let d3 = 1.5 * s2 - 4.0 * s3 + 2.5 * s4;
                let d4 = -12.0 * s2 + 28.0 * s3 - 15.0 * s4;
                let d5 = 30.0 * s2 - 60.0 * s3 + 30.0 * s4;
                for i in 0..n {
                    let (p0, p1) = (hm.q0[i], hm.q1[i]);
                    let (w0, w1) = (hm.v0[i] * dt, hm.v1[i] * dt);
                    let (c0, c1) = (hm.a0[i] * dt * dt, hm.a1[i] * dt * dt);
                    y[i] = h0 * p0 + h1 * w0 + h2 * c0 + h3 * c1 + h4 * w1 + h5 * p1;
                    y[n + i] = (d0 * p0 + d1 * w0 + d2 * c0 + d3 * c1 + d4 * w1 + d5 * p1) / dt;
                }
                y[2 * n] = self.raw_t0 + u * dt;
            }
        }
    }

    fn linear_time(&self) -> bool {
        !matches!(self.interp, Interp::Dense { linear_time: false, .. })
    }

    fn raw_time(&self, u: f64) -> f64 {
        match &self.interp {
            Interp::Dense { step, .. } => {
                let th = if self.reversed { 1.0 - u } else { u };
                step.eval_component(th, step.dim() - 1)
            }
            Interp::Hermite(_) => self.raw_t0 + u * (self.raw_t1 - self.raw_t0),
        }
    }

    fn raw_u_at(&self, t: f64) -> f64 {
        let lin = ((t - self.raw_t0) / (self.raw_t1 - self.raw_t0)).clamp(0.0, 1.0);
        if self.linear_time() {
            return lin;
        }
        // t(u) is monotone on the interval
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut u = lin;
        for _ in 0..200 {
            let tu = self.raw_time(u);
            if tu == t {
                break;
            }
            if tu < t {
                lo = u;
            } else {
                hi = u;
            }
            u = 0.5 * (lo + hi);
            if hi - lo < 1e-16 {
                break;
            }
        }
        u
    }

    /// Interval fraction at time `t` (clamped to the interval).
    pub fn u_at(&self, t: f64) -> f64 {
        let w = self.ub - self.ua;
        if w <= 0.0 {
            return 0.0;
        }
        ((self.raw_u_at(t) - self.ua) / w).clamp(0.0, 1.0)
    }

    pub fn state_at_u(&self, u: f64, n: usize) -> State {
        let mut y = vec![0.0; 2 * n + 1];
        self.eval_u(u, &mut y);
        State {
            t: y[2 * n],
            q: y[..n].to_vec(),
            v: y[n..2 * n].to_vec(),
        }
    }
}

/// Time-ordered piecewise-polynomial solution with its event log.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    sys: MassSystem,
    segments: Vec<Segment>,
    pub events: Vec<Event>,
    pub tol: f64,
    pub termination: Termination,
    pub stats: RunStats,
    /// Energy of the initial state.
    pub e0: f64,
}

impl Trajectory {
    pub(crate) fn from_parts(
        sys: MassSystem,
        mut segments: Vec<Segment>,
        events: Vec<Event>,
        tol: f64,
        termination: Termination,
        stats: RunStats,
        e0: f64,
    ) -> Self {
        segments.sort_by(|a, b| a.t0.total_cmp(&b.t0));
        Trajectory {
            sys,
            segments,
            events,
            tol,
            termination,
            stats,
            e0,
        }
    }

    /// Build a trajectory from time-ordered samples, interpolated by quintic Hermite pieces.
    pub fn from_samples(sys: &MassSystem, samples: &[State], tol: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("need at least two samples"));
        }
        for s in samples {
            s.validate(sys)?;
        }
        let segments = samples
            .windows(2)
            .map(|w| Segment::hermite(sys, &w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        let e0 = dynamics::energy(sys, &samples[0])?;
        let mut stats = RunStats {
            steps: segments.len(),
            ..Default::default()
        };
        for s in samples {
            let e = dynamics::energy(sys, s)?;
            stats.max_energy_drift = stats.max_energy_drift.max((e - e0).abs());
            let (r, pair) = sys.min_pair_distance(&s.q);
            if r < stats.closest.r {
                stats.closest = ClosestApproach { t: s.t, r, pair };
            }
        }
        Ok(Trajectory {
            sys: sys.clone(),
            segments,
            events: Vec::new(),
            tol,
            termination: Termination::Completed,
            stats,
            e0,
        })
    }

    /// Concatenate a trajectory ending at time `t*` with one starting there.
    pub fn join(earlier: Trajectory, later: Trajectory) -> Result<Self> {
        if earlier.sys != later.sys {
            return Err(Error::invalid("cannot join trajectories of different systems"));
        }
        let (_, e_hi) = earlier.span();
        let (l_lo, _) = later.span();
        if (e_hi - l_lo).abs() > 1e-12 * (1.0 + e_hi.abs()) {
            return Err(Error::invalid("trajectories do not meet"));
        }
        let mut segments = earlier.segments;
        segments.extend(later.segments);
        let mut events = earlier.events;
        for ev in later.events {
            let dup = events
                .iter()
                .any(|x| x.kind == ev.kind && (x.t - ev.t).abs() <= 1e-12 * (1.0 + ev.t.abs()));
            if !dup {
                events.push(ev);
            }
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        let (a, b) = (earlier.stats, later.stats);
        let stats = RunStats {
            steps: a.steps + b.steps,
            rejected: a.rejected + b.rejected,
            evaluations: a.evaluations + b.evaluations,
            max_energy_drift: a.max_energy_drift.max(b.max_energy_drift),
            max_momentum_drift: a.max_momentum_drift.max(b.max_momentum_drift),
            closest: if a.closest.r <= b.closest.r { a.closest } else { b.closest },
        };
        let termination = match (earlier.termination, later.termination) {
            (Termination::Completed, t) => t,
            (t, _) => t,
        };
        Ok(Trajectory::from_parts(
            later.sys,
            segments,
            events,
            earlier.tol.max(later.tol),
            termination,
            stats,
            later.e0,
        ))
    }

    pub fn sys(&self) -> &MassSystem {
        &self.sys
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn span(&self) -> (f64, f64) {
        (
            self.segments.first().map_or(f64::NAN, |s| s.t0),
            self.segments.last().map_or(f64::NAN, |s| s.t1),
        )
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.span();
        t >= lo && t <= hi
    }

    pub fn check_window(&self, lo: f64, hi: f64) -> Result<()> {
        let (a, b) = self.span();
        let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
        if lo < a - slack || hi > b + slack || !(lo <= hi) {
            return Err(Error::WindowOutOfSpan {
                lo,
                hi,
                span_lo: a,
                span_hi: b,
            });
        }
        Ok(())
    }

    fn segment_index(&self, t: f64) -> usize {
        let i = self.segments.partition_point(|s| s.t1 < t);
        i.min(self.segments.len() - 1)
    }

    /// Interpolated state at time `t`.
    pub fn state_at(&self, t: f64) -> Result<State> {
        self.check_window(t, t)?;
        let seg = &self.segments[self.segment_index(t)];
        let mut s = seg.state_at_u(seg.u_at(t), self.sys.config_len());
        s.t = t;
        Ok(s)
    }

    /// States at every segment boundary, in time order.
    pub fn samples(&self) -> Vec<State> {
        let n = self.sys.config_len();
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        for seg in &self.segments {
            out.push(seg.state_at_u(0.0, n));
        }
        if let Some(seg) = self.segments.last() {
            out.push(seg.state_at_u(1.0, n));
        }
        out
    }

    pub fn initial_state(&self) -> State {
        self.segments[0].state_at_u(0.0, self.sys.config_len())
    }

    pub fn final_state(&self) -> State {
        self.segments.last().unwrap().state_at_u(1.0, self.sys.config_len())
    }

    /// Gauss-Legendre quadrature of `f` over `[lo, hi]`, 8 nodes per segment piece.
    pub fn integrate<F>(&self, lo: f64, hi: f64, mut f: F) -> Result<f64>
    where
        F: FnMut(&State) -> Result<f64>,
    {
        self.check_window(lo, hi)?;
        if lo == hi {
            return Ok(0.0);
        }
        let n = self.sys.config_len();
        let mut total = 0.0;
        let first = self.segment_index(lo);
        for seg in &self.segments[first..] {
            if seg.t0 >= hi {
                break;
            }
            let a = seg.t0.max(lo);
            let b = seg.t1.min(hi);
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let mut acc = 0.0;
            for (x, w) in GL8 {
                let t = mid + half * x;
                let mut s = seg.state_at_u(seg.u_at(t), n);
                s.t = t;
                acc += w * f(&s)?;
            }
            total += half * acc;
        }
        Ok(total)
    }

    /// Time average of `f` over `[lo, hi]`.
    pub fn average<F>(&self, lo: f64, hi: f64, f: F) -> Result<f64>
    where
        F: FnMut(&State) -> Result<f64>,
    {
        if !(hi > lo) {
            return Err(Error::invalid("averaging window must have positive length"));
        }
        Ok(self.integrate(lo, hi, f)? / (hi - lo))
    }
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        let s: f64 = GL8.iter().map(|(_, w)| w).sum();
        assert!((s - 2.0).abs() < 1e-14);
        // exact for degree 15
        let i: f64 = GL8.iter().map(|(x, w)| w * x.powi(14)).sum();
        assert!((i - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_reproduces_uniform_motion() {
        let sys = MassSystem::new(vec![1.0, 1.0], 2).unwrap();
        // far apart so accelerations are tiny but nonzero; check endpoint interpolation
        let a = State::new(0.0, vec![-50.0, 0.0, 50.0, 0.0], vec![0.0, 0.1, 0.0, -0.1]);
        let b = State::new(1.0, vec![-50.0, 0.1, 50.0, -0.1], vec![0.0, 0.1, 0.0, -0.1]);
        let seg = Segment::hermite(&sys, &a, &b).unwrap();
        let s0 = seg.state_at_u(0.0, 4);
        let s1 = seg.state_at_u(1.0, 4);
        assert_eq!(s0.q, a.q);
        assert!((s1.q[1] - 0.1).abs() < 1e-15);
        assert!((s1.v[1] - 0.1).abs() < 1e-14);
        assert!((seg.u_at(0.25) - 0.25).abs() < 1e-15);
    }
}
