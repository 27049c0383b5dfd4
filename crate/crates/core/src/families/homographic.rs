//! Keplerian families of homographic solutions through a planar central configuration.

use serde::{Deserialize, Serialize};

use super::central::{quarter_turn, CentralConfiguration};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::integrate::{propagate, PropagateOptions, Termination, Trajectory};
use crate::system::{EnergyLevel, MassSystem, State};
use crate::virial::thickness;

/// Relative tolerance for matching the predicted `U` range.
pub const RANGE_TOL: f64 = 1e-6;

/// Scale-factor Kepler problem of the family: `q = r R(theta) q_hat` with
/// `I(q_hat) = 1` gives `r'' = J^2/r^3 - U_hat/r^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerElements {
    /// `U(q_hat)`, the Kepler coupling.
    pub u_hat: f64,
    pub semi_major: f64,
    pub eccentricity: f64,
    pub period: f64,
    /// Angular momentum of the relative equilibrium.
    pub j_max: f64,
}

/// Scale-factor elements at angular momentum `j`.
pub fn kepler_elements(sys: &MassSystem, cc: &CentralConfiguration, j: f64, level: EnergyLevel) -> Result<KeplerElements> {
    if !sys.is_newtonian() {
        return Err(Error::invalid("homographic families are built for the Newtonian potential"));
    }
    if !cc.is_planar(sys) {
        return Err(Error::invalid("central configuration is not planar"));
    }
    let h = level.h();
    let u_hat = dynamics::potential(sys, &cc.unit(sys))?.finite()?;
    let j_max = u_hat / (2.0 * h).sqrt();
    if !(j.abs() <= j_max * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!("|J| = {} exceeds the family maximum {j_max}", j.abs())));
    }
    let a = u_hat / (2.0 * h);
    let e2 = 1.0 - 2.0 * h * j * j / (u_hat * u_hat);
    Ok(KeplerElements {
        u_hat,
        semi_major: a,
        eccentricity: e2.max(0.0).sqrt(),
        period: 2.0 * std::f64::consts::PI * (a.powi(3) / u_hat).sqrt(),
        j_max,
    })
}

/// Thickness of the family member with angular momentum `j`: its Kepler eccentricity.
pub fn homographic_k(sys: &MassSystem, cc: &CentralConfiguration, j: f64, level: EnergyLevel) -> Result<f64> {
    Ok(kepler_elements(sys, cc, j, level)?.eccentricity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomographicOrbit {
    pub cc: CentralConfiguration,
    pub h: f64,
    pub j: f64,
    pub elements: KeplerElements,
    pub e: f64,
    pub k: f64,
    /// `[2h/(1+k), 2h/(1-k)]`; the upper end is infinite at `k = 1`.
    pub u_range: (f64, f64),
    /// Extremes of `U` along the integrated orbit.
    pub measured: (f64, f64),
    /// Thickness measured along the integrated orbit.
    pub measured_k: f64,
    pub endpoints_achieved: bool,
}

/// Family member with angular momentum `j`, released at its largest scale.
pub fn homographic_start(sys: &MassSystem, cc: &CentralConfiguration, j: f64, level: EnergyLevel) -> Result<State> {
    let el = kepler_elements(sys, cc, j, level)?;
    let r = el.semi_major * (1.0 + el.eccentricity);
    let q: Vec<f64> = cc.unit(sys).iter().map(|x| r * x).collect();
    let w = j / (r * r);
    let v = quarter_turn(sys, &q).iter().map(|x| w * x).collect();
    Ok(State::new(0.0, q, v))
}

/// Integrate one period of the family member (up to total collision at `J = 0`)
/// and compare the measured `U` range with `[2h/(1+k), 2h/(1-k)]`.
pub fn homographic_orbit(
    sys: &MassSystem,
    cc: &CentralConfiguration,
    j: f64,
    level: EnergyLevel,
    tol: f64,
) -> Result<(HomographicOrbit, Trajectory)> {
    let el = kepler_elements(sys, cc, j, level)?;
    let h = level.h();
    let s0 = homographic_start(sys, cc, j, level)?;
    let opts = PropagateOptions {
        strict_drift: false,
        ..PropagateOptions::with_tol(tol)
    };
    let traj = propagate(&s0, sys, el.period, &opts)?;
    let th = thickness(&traj, level, None)?;
    let k = el.eccentricity;
    let lo = 2.0 * h / (1.0 + k);
    let hi = if k < 1.0 { 2.0 * h / (1.0 - k) } else { f64::INFINITY };
    let lo_ok = (th.u_min - lo).abs() <= RANGE_TOL * lo;
    let hi_ok = if hi.is_finite() {
        (th.u_max - hi).abs() <= RANGE_TOL * hi
    } else {
        traj.termination == Termination::CollisionProximity
    };
    Ok((
        HomographicOrbit {
            cc: CentralConfiguration::new(sys, &cc.unit(sys))?,
            h,
            j,
            elements: el,
            e: k,
            k,
            u_range: (lo, hi),
            measured: (th.u_min, th.u_max),
            measured_k: th.k,
            endpoints_achieved: lo_ok && hi_ok,
        },
        traj,
    ))
}
