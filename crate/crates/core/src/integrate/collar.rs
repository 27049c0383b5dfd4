use serde::{Deserialize, Serialize};

use super::events::{EventKind, EventSpec};
use super::propagate::{propagate, PropagateOptions};
use super::trajectory::Termination;
use crate::dynamics;
use crate::error::{Error, Result};
use crate::exec::{map_indices, member_rng, Execution};
use crate::numeric::median;
use crate::sample;
use crate::system::{EnergyLevel, MassSystem, State};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollarOptions {
    /// Collar half-width multiplier: exit is `U > h + multiplier * eps`.
    pub multiplier: f64,
    pub max_time: f64,
    pub tol: f64,
}

impl Default for CollarOptions {
    fn default() -> Self {
        CollarOptions {
            multiplier: 2.0,
            max_time: 50.0,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollarExit {
    pub eps: f64,
    /// `None` when the run did not leave the collar: a counterexample candidate.
    pub exit_time: Option<f64>,
    pub state: Option<State>,
    /// dU/dt at the exit crossing.
    pub du_dt: f64,
    pub termination: Termination,
}

/// First forward time at which `U` rises through `h + multiplier * eps`.
pub fn hill_collar_exit_time(
    s0: &State,
    sys: &MassSystem,
    level: EnergyLevel,
    eps: f64,
    opts: &CollarOptions,
) -> Result<CollarExit> {
    let h = level.h();
    let u0 = dynamics::potential_value(sys, &s0.q)?;
    if !(u0 > h * (1.0 - 1e-12) && u0 <= h + eps * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!("U(s0) = {u0} is not in (h, h + eps]")));
    }
    let e = dynamics::energy(sys, s0)?;
    if (e + h).abs() > 1e-9 * h {
        return Err(Error::InconsistentEnergy(format!("E = {e}, expected {}", -h)));
    }
    let c = h + opts.multiplier * eps;
    let popts = PropagateOptions {
        tol: opts.tol,
        events: EventSpec {
            kinds: vec![],
            level: Some(level),
            hill_value: Some(c),
            ..Default::default()
        },
        terminal: vec![EventKind::HillBandExit],
        terminal_direction: 1,
        strict_drift: false,
        ..Default::default()
    };
    let traj = propagate(s0, sys, s0.t + opts.max_time, &popts)?;
    let exit = traj.events.iter().find(|e| e.kind == EventKind::HillBandExit);
    Ok(match exit {
        Some(ev) => {
            let mut acc = vec![0.0; sys.config_len()];
            dynamics::accelerations(sys, &ev.state.q, &mut acc)?;
            CollarExit {
                eps,
                exit_time: Some(ev.t - s0.t),
                state: Some(ev.state.clone()),
                du_dt: sys.inner(&ev.state.v, &acc),
                termination: traj.termination,
            }
        }
        None => CollarExit {
            eps,
            exit_time: None,
            state: None,
            du_dt: f64::NAN,
            termination: traj.termination,
        },
    })
}

/// Ensemble start: a random configuration with `U = h + xi * eps` for a fixed
/// per-member `xi`, moving along a random direction on the energy shell.
///
/// The configuration shape, `xi` and the velocity direction depend only on
/// `(seed, index)`, so the same members are reused across `eps` values.
pub fn collar_start(sys: &MassSystem, level: EnergyLevel, eps: f64, seed: u64, index: usize) -> Result<State> {
    let mut rng = member_rng(seed, index);
    let q = sample::random_config(sys, &mut rng, 0.3)?;
    let xi: f64 = rand::Rng::gen_range(&mut rng, 0.05..=1.0);
    let dir = sample::random_direction(sys, &mut rng);
    let h = level.h();
    let q = dynamics::scaled_to_level(sys, &q, h + xi * eps)?;
    let u = dynamics::potential_value(sys, &q)?;
    let v = sample::velocity_with_kinetic(sys, &dir, u - h);
    Ok(State::new(0.0, q, v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollarRow {
    pub eps: f64,
    pub median_exit: f64,
    pub exited: usize,
    pub total: usize,
    pub min_abs_du_dt: f64,
}

/// Median exit times of a fixed ensemble over several collar widths.
pub fn collar_scan(
    sys: &MassSystem,
    level: EnergyLevel,
    eps_values: &[f64],
    ensemble: usize,
    seed: u64,
    opts: &CollarOptions,
    exec: Execution,
) -> Result<Vec<CollarRow>> {
    let mut rows = Vec::with_capacity(eps_values.len());
    for &eps in eps_values {
        let runs = map_indices(exec, ensemble, |i| {
            let s0 = collar_start(sys, level, eps, seed, i)?;
            hill_collar_exit_time(&s0, sys, level, eps, opts)
        });
        let runs: Vec<CollarExit> = runs.into_iter().collect::<Result<_>>()?;
        let times: Vec<f64> = runs.iter().filter_map(|r| r.exit_time).collect();
        rows.push(CollarRow {
            eps,
            median_exit: median(&times),
            exited: times.len(),
            total: runs.len(),
            min_abs_du_dt: runs
                .iter()
                .filter(|r| r.exit_time.is_some())
                .map(|r| r.du_dt.abs())
                .fold(f64::INFINITY, f64::min),
        });
    }
    Ok(rows)
}
