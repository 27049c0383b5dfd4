//! Spatial isosceles three-body subsystem: bodies 1 and 2 (equal masses)
//! mirror each other through the z-axis, body 3 moves on the axis.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indices, member_rng, Execution};
use crate::integrate::dop853::{integrate_dense, integrate_to, OdeSystem, StepControl};
use crate::system::{EnergyLevel, MassSystem, State};

/// Reduced state: binary radius `rho` (distance of body 1 from the axis),
/// height `zeta = z3 - z12` of body 3 over the binary plane, the binary's
/// rotation angle `phi` and the conserved angular momentum `j` about the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoscelesState {
    pub t: f64,
    pub rho: f64,
    pub zeta: f64,
    pub rho_dot: f64,
    pub zeta_dot: f64,
    pub phi: f64,
    pub j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Params {
    m: f64,
    m3: f64,
    g: f64,
}

impl Params {
    fn of(sys: &MassSystem) -> Result<Self> {
        if sys.n_bodies() != 3 || sys.dim() != 3 {
            return Err(Error::invalid("the isosceles subsystem needs three bodies in space"));
        }
        if !sys.is_newtonian() {
            return Err(Error::invalid("the isosceles subsystem is built for the Newtonian potential"));
        }
        let (m, m2) = (sys.mass(0), sys.mass(1));
        if (m - m2).abs() > 1e-12 * m {
            return Err(Error::invalid("bodies 1 and 2 must have equal masses"));
        }
        Ok(Params {
            m,
            m3: sys.mass(2),
            g: sys.g(),
        })
    }

    /// Reduced mass of the height coordinate.
    fn mu(&self) -> f64 {
        2.0 * self.m * self.m3 / (2.0 * self.m + self.m3)
    }

    fn potential(&self, rho: f64, zeta: f64) -> f64 {
        let Params { m, m3, g } = *self;
        g * m * m / (2.0 * rho) + 2.0 * g * m * m3 / (rho * rho + zeta * zeta).sqrt()
    }

    /// `(dU/drho, dU/dzeta)`.
    fn gradient(&self, rho: f64, zeta: f64) -> (f64, f64) {
        let Params { m, m3, g } = *self;
        let d3 = (rho * rho + zeta * zeta).powf(1.5);
        (
            -g * m * m / (2.0 * rho * rho) - 2.0 * g * m * m3 * rho / d3,
            -2.0 * g * m * m3 * zeta / d3,
        )
    }
}

/// `U` of the reduced configuration.
pub fn isosceles_potential(sys: &MassSystem, rho: f64, zeta: f64) -> Result<f64> {
    Ok(Params::of(sys)?.potential(rho, zeta))
}

/// Total energy of the reduced state.
pub fn isosceles_energy(sys: &MassSystem, s: &IsoscelesState) -> Result<f64> {
    let p = Params::of(sys)?;
    let k = p.m * s.rho_dot * s.rho_dot + s.j * s.j / (4.0 * p.m * s.rho * s.rho) + 0.5 * p.mu() * s.zeta_dot * s.zeta_dot;
    Ok(k - p.potential(s.rho, s.zeta))
}

/// Project a symmetric spatial state onto the subsystem; `tol` bounds the
/// symmetry defect relative to the state's size.
pub fn isosceles_reduce(sys: &MassSystem, s: &State, tol: f64) -> Result<IsoscelesState> {
    let p = Params::of(sys)?;
    s.validate(sys)?;
    let (q, v) = (&s.q, &s.v);
    let scale_q = sys.norm(q).max(f64::MIN_POSITIVE);
    let scale_v = sys.norm(v).max(1.0);
    // mirror pairs: body 2 = (-x1, -y1, z1), body 3 on the axis, centroid at the origin
    let defects = [
        (q[3] + q[0]).abs() / scale_q,
        (q[4] + q[1]).abs() / scale_q,
        (q[5] - q[2]).abs() / scale_q,
        q[6].abs() / scale_q,
        q[7].abs() / scale_q,
        (2.0 * p.m * q[2] + p.m3 * q[8]).abs() / (scale_q * (2.0 * p.m + p.m3)),
        (v[3] + v[0]).abs() / scale_v,
        (v[4] + v[1]).abs() / scale_v,
        (v[5] - v[2]).abs() / scale_v,
        v[6].abs() / scale_v,
        v[7].abs() / scale_v,
        (2.0 * p.m * v[2] + p.m3 * v[8]).abs() / (scale_v * (2.0 * p.m + p.m3)),
    ];
    let deviation = defects.iter().copied().fold(0.0, f64::max);
    if deviation > tol {
        return Err(Error::SymmetryViolated { deviation, tolerance: tol });
    }
    let (x, y) = (q[0], q[1]);
    let rho = x.hypot(y);
    if !(rho > 0.0) {
        return Err(Error::invalid("binary on the axis"));
    }
    Ok(IsoscelesState {
        t: s.t,
        rho,
        zeta: q[8] - q[2],
        rho_dot: (x * v[0] + y * v[1]) / rho,
        zeta_dot: v[8] - v[2],
        phi: y.atan2(x),
        j: 2.0 * p.m * (x * v[1] - y * v[0]),
    })
}

/// Spatial state of a reduced state (centroid at the origin).
pub fn isosceles_embed(sys: &MassSystem, s: &IsoscelesState) -> Result<State> {
    let p = Params::of(sys)?;
    let tot = 2.0 * p.m + p.m3;
    let (z12, z3) = (-p.m3 * s.zeta / tot, 2.0 * p.m * s.zeta / tot);
    let (w12, w3) = (-p.m3 * s.zeta_dot / tot, 2.0 * p.m * s.zeta_dot / tot);
    let (sn, cs) = s.phi.sin_cos();
    let phi_dot = s.j / (2.0 * p.m * s.rho * s.rho);
    let (x, y) = (s.rho * cs, s.rho * sn);
    let (vx, vy) = (s.rho_dot * cs - s.rho * phi_dot * sn, s.rho_dot * sn + s.rho * phi_dot * cs);
    Ok(State::new(
        s.t,
        vec![x, y, z12, -x, -y, z12, 0.0, 0.0, z3],
        vec![vx, vy, w12, -vx, -vy, w12, 0.0, 0.0, w3],
    ))
}

/// Reduced equations `2m rho'' = J^2/(2m rho^3) + dU/drho`, `mu zeta'' = dU/dzeta`,
/// `phi' = J/(2m rho^2)` over `y = [rho, zeta, rho', zeta', phi]`.
struct Reduced {
    p: Params,
    j: f64,
}

impl OdeSystem for Reduced {
    fn dim(&self) -> usize {
        5
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (rho, zeta) = (y[0], y[1]);
        if !(rho > 0.0) {
            return Err(Error::Collision { a: 0, b: 1 });
        }
        let (gr, gz) = self.p.gradient(rho, zeta);
        let m2 = 2.0 * self.p.m;
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = (self.j * self.j / (m2 * rho.powi(3)) + gr) / m2;
        dy[3] = gz / self.p.mu();
        dy[4] = self.j / (m2 * rho * rho);
        Ok(())
    }
}

fn pack(s: &IsoscelesState) -> Vec<f64> {
    vec![s.rho, s.zeta, s.rho_dot, s.zeta_dot, s.phi]
}

fn unpack(t: f64, j: f64, y: &[f64]) -> IsoscelesState {
    IsoscelesState {
        t,
        rho: y[0],
        zeta: y[1],
        rho_dot: y[2],
        zeta_dot: y[3],
        phi: y[4],
        j,
    }
}

/// Reduced states at each of `times` (in order of the list, either direction from `s0.t`).
pub fn isosceles_propagate(sys: &MassSystem, s0: &IsoscelesState, times: &[f64], tol: f64) -> Result<Vec<IsoscelesState>> {
    let ode = Reduced { p: Params::of(sys)?, j: s0.j };
    let mut out = Vec::with_capacity(times.len());
    let mut t = s0.t;
    let mut y = pack(s0);
    for &t1 in times {
        y = integrate_to(&ode, t, y, t1, StepControl::with_tol(tol), 1_000_000)?;
        t = t1;
        out.push(unpack(t, s0.j, &y));
    }
    Ok(out)
}

/// Threshold rule for the open-problem scan: the problem writes `U >= 2m/a`
/// without fixing `G` or the mass units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "kebab-case")]
pub enum UThreshold {
    /// `2 G m / a`, the expression as written with `G` restored.
    Literal,
    /// `G m^2 / (2a)`, the binary's own potential on a circle of radius `a`.
    BinaryLimit,
    Explicit(f64),
}

impl UThreshold {
    pub fn value(self, sys: &MassSystem, a: f64) -> Result<f64> {
        let p = Params::of(sys)?;
        Ok(match self {
            UThreshold::Literal => 2.0 * p.g * p.m / a,
            UThreshold::BinaryLimit => p.g * p.m * p.m / (2.0 * a),
            UThreshold::Explicit(v) => v,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Op5Options {
    /// Radius of the circular binary asymptote.
    pub a: f64,
    pub level: EnergyLevel,
    pub threshold: UThreshold,
    pub n_seeds: usize,
    /// Initial heights, log-uniform, in units of `a`.
    pub zeta_range: (f64, f64),
    /// Relative spread of the initial binary radius about `a`.
    pub rho_spread: f64,
    pub horizon: f64,
    /// Escape is flagged once `|zeta|` exceeds this multiple of `a`.
    pub escape_factor: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Op5Options {
    pub fn new(a: f64, level: EnergyLevel) -> Self {
        Op5Options {
            a,
            level,
            threshold: UThreshold::Literal,
            n_seeds: 64,
            zeta_range: (0.5, 20.0),
            rho_spread: 0.05,
            horizon: 200.0,
            escape_factor: 20.0,
            tol: 1e-11,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Op5Side {
    /// Time until `U` first drops below the threshold (the horizon if never).
    pub time_above: f64,
    pub min_u: f64,
    /// `|zeta|` beyond the escape factor, receding, with positive height energy.
    pub escaping: bool,
    pub collided: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Op5Candidate {
    pub index: usize,
    pub start: IsoscelesState,
    pub threshold: f64,
    pub forward: Op5Side,
    pub backward: Op5Side,
    pub both_escape: bool,
    /// Every sampled point of both branches has `U >= threshold`.
    pub above_throughout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Op5Scan {
    /// Finite integrations are candidate evidence only; no confinement claim is made.
    pub evidence: String,
    pub options: Op5Options,
    pub threshold: f64,
    /// Sorted: two-sided escapers first, then by time spent above the threshold.
    pub candidates: Vec<Op5Candidate>,
    pub skipped: usize,
}

fn op5_start<R: Rng>(sys: &MassSystem, p: &Params, opts: &Op5Options, rng: &mut R) -> Option<IsoscelesState> {
    let rho = opts.a * (1.0 + rng.gen_range(-opts.rho_spread..=opts.rho_spread));
    let (lo, hi) = opts.zeta_range;
    let zeta = opts.a * crate::sample::log_uniform(rng, lo, hi);
    // angular momentum of the circular binary of radius a
    let j = (p.g * p.m.powi(3) * opts.a).sqrt();
    let k_rest = j * j / (4.0 * p.m * rho * rho);
    let kz = p.potential(rho, zeta) - opts.level.h() - k_rest;
    if !(kz > 0.0) {
        return None;
    }
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let s = IsoscelesState {
        t: 0.0,
        rho,
        zeta,
        rho_dot: 0.0,
        zeta_dot: sign * (2.0 * kz / p.mu()).sqrt(),
        phi: 0.0,
        j,
    };
    debug_assert!((isosceles_energy(sys, &s).ok()? + opts.level.h()).abs() < 1e-9 * opts.level.h());
    Some(s)
}

fn op5_side(p: &Params, s0: &IsoscelesState, dir: f64, threshold: f64, opts: &Op5Options) -> Op5Side {
    let ode = Reduced { p: *p, j: s0.j };
    let u0 = p.potential(s0.rho, s0.zeta);
    let mut side = Op5Side {
        time_above: if u0 >= threshold { opts.horizon } else { 0.0 },
        min_u: u0,
        escaping: false,
        collided: false,
    };
    let steps = match integrate_dense(&ode, 0.0, pack(s0), dir * opts.horizon, StepControl::with_tol(opts.tol), 1_000_000) {
        Ok(s) => s,
        Err(_) => {
            side.collided = true;
            return side;
        }
    };
    let mut y = vec![0.0; 5];
    let mut crossed = u0 < threshold;
    for st in &steps {
        for k in 1..=4 {
            let th = k as f64 / 4.0;
            st.eval(th, &mut y);
            let u = p.potential(y[0], y[1]);
            side.min_u = side.min_u.min(u);
            if !crossed && u < threshold {
                crossed = true;
                side.time_above = (st.tau0 + th * st.h).abs();
            }
        }
    }
    let last = steps.last().map_or_else(|| pack(s0), |s| s.end_value());
    let (rho, zeta, zd) = (last[0], last[1], last[3] * dir);
    let height_energy = 0.5 * p.mu() * zd * zd - 2.0 * p.g * p.m * p.m3 / (rho * rho + zeta * zeta).sqrt();
    side.escaping = zeta.abs() > opts.escape_factor * opts.a && zeta * zd > 0.0 && height_energy > 0.0;
    side
}

/// Candidate scan for two-sided escapes with `U` kept above a threshold.
pub fn op5_scan(sys: &MassSystem, opts: &Op5Options, exec: Execution) -> Result<Op5Scan> {
    let p = Params::of(sys)?;
    if !(opts.a > 0.0 && opts.horizon > 0.0) {
        return Err(Error::invalid("radius and horizon must be positive"));
    }
    let threshold = opts.threshold.value(sys, opts.a)?;
    let runs = map_indices(exec, opts.n_seeds, |i| {
        let mut rng = member_rng(opts.seed, i);
        let s0 = op5_start(sys, &p, opts, &mut rng)?;
        let forward = op5_side(&p, &s0, 1.0, threshold, opts);
        let backward = op5_side(&p, &s0, -1.0, threshold, opts);
        Some(Op5Candidate {
            index: i,
            start: s0,
            threshold,
            both_escape: forward.escaping && backward.escaping,
            above_throughout: forward.min_u >= threshold && backward.min_u >= threshold,
            forward,
            backward,
        })
    });
    let skipped = runs.iter().filter(|r| r.is_none()).count();
    let mut candidates: Vec<Op5Candidate> = runs.into_iter().flatten().collect();
    candidates.sort_by(|a, b| {
        b.both_escape
            .cmp(&a.both_escape)
            .then((b.forward.time_above + b.backward.time_above).total_cmp(&(a.forward.time_above + a.backward.time_above)))
            .then(a.index.cmp(&b.index))
    });
    Ok(Op5Scan {
        evidence: "candidate".into(),
        options: *opts,
        threshold,
        candidates,
        skipped,
    })
}
