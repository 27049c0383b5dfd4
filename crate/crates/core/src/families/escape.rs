//! Turn-around states and the Birkhoff-Moeckel escape condition.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, angular_momentum_norm, energy, i_dot, kinetic, moment_of_inertia_cm};
use crate::error::{Error, Result};
use crate::exec::{map_indices, member_rng, Execution};
use crate::integrate::{propagate, PropagateOptions, Trajectory};
use crate::sample::{random_config, random_direction};
use crate::system::{MassSystem, State};
use crate::virial::{pollard_classify, Growth, GrowthClass, PollardOptions};

/// How the check reads `h` off the state's energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyNormalization {
    /// `E = -2h`, the normalization stated for the escape condition.
    Moeckel,
    /// `E = -h`, the convention used everywhere else.
    Standard,
}

impl EnergyNormalization {
    pub fn h(self, e: f64) -> f64 {
        match self {
            EnergyNormalization::Moeckel => -0.5 * e,
            EnergyNormalization::Standard => -e,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EnergyNormalization::Moeckel => "E = -2h",
            EnergyNormalization::Standard => "E = -h",
        }
    }
}

/// Relative margin for both strict inequalities: `I0` must undercut `J^2/2h`
/// and `I''` must exceed `4K + 2U` by this fraction, so ties at rounding level
/// (relative equilibria) satisfy neither.
pub const ROUNDING_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmCheck {
    pub normalization: EnergyNormalization,
    pub energy: f64,
    pub h: f64,
    pub i0: f64,
    pub j2: f64,
    /// `J^2 / 2h`.
    pub threshold: f64,
    /// `I0 < J^2 / 2h`.
    pub hypothesis: bool,
    /// `4K - 2U`.
    pub i_ddot: f64,
    pub conclusion: bool,
    /// The implication holds: hypothesis false or conclusion true.
    pub holds: bool,
}

/// Evaluate `I0 < J^2/2h => I'' > 0` at a turn-around state.
///
/// `tol` bounds `|I'| / (2 sqrt(I) sqrt(2K))`, the cosine between position and velocity.
pub fn birkhoff_moeckel_check(s: &State, sys: &MassSystem, norm: EnergyNormalization, tol: f64) -> Result<BmCheck> {
    s.validate(sys)?;
    let s = s.clone().centered(sys);
    let e = energy(sys, &s)?;
    if !(e < 0.0) {
        return Err(Error::InconsistentEnergy(format!("energy {e} is not negative")));
    }
    let i0 = moment_of_inertia_cm(sys, &s.q);
    let k = kinetic(sys, &s.v);
    let scale = 2.0 * i0.sqrt() * (2.0 * k).sqrt();
    let idot = i_dot(sys, &s.q, &s.v);
    if idot.abs() > tol * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition(format!("not a turn-around point: dI/dt = {idot:e}")));
    }
    let h = norm.h(e);
    let j2 = angular_momentum_norm(sys, &s).powi(2);
    let threshold = j2 / (2.0 * h);
    let i_ddot = dynamics::lagrange_jacobi_rhs(sys, &s)?;
    let hypothesis = i0 < threshold * (1.0 - ROUNDING_MARGIN);
    let conclusion = i_ddot > ROUNDING_MARGIN * (4.0 * k + 2.0 * (k - e));
    Ok(BmCheck {
        normalization: norm,
        energy: e,
        h,
        i0,
        j2,
        threshold,
        hypothesis,
        i_ddot,
        conclusion,
        holds: !hypothesis || conclusion,
    })
}

/// Random centred turn-around state: velocity orthogonal to the configuration
/// in the mass metric, kinetic energy `kinetic_fraction * U`.
pub fn random_turnaround<R: Rng>(sys: &MassSystem, rng: &mut R, kinetic_fraction: f64) -> Result<State> {
    let q = random_config(sys, rng, 0.05)?;
    let u = dynamics::potential(sys, &q)?.finite()?;
    let mut v = random_direction(sys, rng);
    let c = sys.inner(&v, &q) / sys.inner(&q, &q);
    v.iter_mut().zip(&q).for_each(|(x, y)| *x -= c * y);
    let nv = sys.norm(&v);
    if !(nv > 0.0) {
        return Err(Error::invalid("degenerate velocity draw"));
    }
    let s = (2.0 * kinetic_fraction * u).sqrt() / nv;
    v.iter_mut().for_each(|x| *x *= s);
    Ok(State::new(0.0, q, v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmEnsemble {
    pub normalization: EnergyNormalization,
    /// States drawn.
    pub drawn: usize,
    /// Checks on states satisfying the hypothesis.
    pub passing: Vec<(usize, BmCheck)>,
    /// Indices among `passing` where the conclusion fails.
    pub violations: Vec<usize>,
}

/// Draw turn-around states (kinetic fraction uniform in `(0, 1)`, so `E < 0`)
/// until `n` satisfy the hypothesis or `max_draws` is reached.
pub fn birkhoff_moeckel_ensemble(
    sys: &MassSystem,
    norm: EnergyNormalization,
    n: usize,
    max_draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<BmEnsemble> {
    let draw = |i: usize| -> Option<BmCheck> {
        let mut rng = member_rng(seed, i);
        let f = rng.gen_range(0.01..0.99);
        let s = random_turnaround(sys, &mut rng, f).ok()?;
        birkhoff_moeckel_check(&s, sys, norm, 1e-12).ok()
    };
    let mut passing = Vec::new();
    let mut drawn = 0;
    let batch = n.max(64);
    while passing.len() < n && drawn < max_draws {
        let m = batch.min(max_draws - drawn);
        let checks = map_indices(exec, m, |k| draw(drawn + k));
        for (k, c) in checks.into_iter().enumerate() {
            if let Some(c) = c.filter(|c| c.hypothesis) {
                if passing.len() < n {
                    passing.push((drawn + k, c));
                }
            }
        }
        drawn += m;
    }
    let violations = passing
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| !c.conclusion)
        .map(|(i, _)| i)
        .collect();
    Ok(BmEnsemble {
        normalization: norm,
        drawn,
        passing,
        violations,
    })
}

/// Recreate the state behind draw `index` of an ensemble.
pub fn ensemble_state(sys: &MassSystem, seed: u64, index: usize) -> Result<State> {
    let mut rng = member_rng(seed, index);
    let f = rng.gen_range(0.01..0.99);
    random_turnaround(sys, &mut rng, f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeRow {
    pub index: usize,
    pub check: BmCheck,
    /// `I` increases strictly on both sides of the turn-around over the horizon.
    pub monotone_both: bool,
    pub forward: Option<Growth>,
    pub backward: Option<Growth>,
    /// `I(t) ~ C t^2` tail coefficients where the growth is quadratic.
    pub c_forward: Option<f64>,
    pub c_backward: Option<f64>,
    /// Integration failure, if any.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeScan {
    pub rows: Vec<EscapeRow>,
    pub monotone_fraction: f64,
    pub horizon: f64,
}

fn strictly_increasing(traj: &Trajectory, n: usize) -> Result<bool> {
    let sys = traj.sys();
    let (t0, t1) = traj.span();
    let mut last = f64::NEG_INFINITY;
    for k in 0..=n {
        let t = t0 + (t1 - t0) * k as f64 / n as f64;
        let i = moment_of_inertia_cm(sys, &traj.state_at(t)?.q);
        if k > 0 && i <= last {
            return Ok(false);
        }
        last = i;
    }
    Ok(true)
}

fn quadratic_c(g: &Growth) -> Option<f64> {
    match g.class {
        GrowthClass::Quadratic { c } => Some(c),
        _ => None,
    }
}

/// Integrate passing states both ways over `horizon` and report whether `I`
/// grows monotonically away from the turn-around, with `I ~ C t^2` tail fits.
pub fn escape_scan(
    sys: &MassSystem,
    states: &[(usize, State, BmCheck)],
    horizon: f64,
    tol: f64,
    exec: Execution,
) -> EscapeScan {
    let opts = PropagateOptions {
        strict_drift: false,
        ..PropagateOptions::with_tol(tol).no_events()
    };
    let pollard = PollardOptions::default();
    let rows = map_indices(exec, states.len(), |i| {
        let (index, s, check) = &states[i];
        let run = |s: &State| -> Result<(bool, Growth)> {
            let traj = propagate(s, sys, horizon, &opts)?;
            Ok((strictly_increasing(&traj, 400)?, pollard_classify(&traj, &pollard)?))
        };
        // the backward branch is the forward run of the time-reversed state
        match (run(s), run(&s.reversed())) {
            (Ok((mf, gf)), Ok((mb, gb))) => EscapeRow {
                index: *index,
                check: *check,
                monotone_both: mf && mb,
                c_forward: quadratic_c(&gf),
                c_backward: quadratic_c(&gb),
                forward: Some(gf),
                backward: Some(gb),
                failure: None,
            },
            (a, b) => EscapeRow {
                index: *index,
                check: *check,
                monotone_both: false,
                forward: a.as_ref().ok().map(|x| x.1),
                backward: b.as_ref().ok().map(|x| x.1),
                c_forward: None,
                c_backward: None,
                failure: a.err().or(b.err()).map(|e| e.to_string()),
            },
        }
    });
    let monotone = rows.iter().filter(|r| r.monotone_both).count();
    EscapeScan {
        monotone_fraction: if rows.is_empty() { 0.0 } else { monotone as f64 / rows.len() as f64 },
        rows,
        horizon,
    }
}
