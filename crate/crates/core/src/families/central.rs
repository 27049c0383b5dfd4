//! Central configurations and the relative equilibria they generate.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, accelerations};
use crate::error::{Error, Result};
use crate::numeric::bisect;
use crate::system::{EnergyLevel, MassSystem, State};

/// Configuration with `grad U(q) + lambda q = 0` in the mass metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralConfiguration {
    pub q: Vec<f64>,
    pub lambda: f64,
    /// `|grad U(q) + lambda q|` in the mass metric.
    pub residual: f64,
}

impl CentralConfiguration {
    /// Centre `q` and measure its central-configuration residual, with
    /// `lambda = alpha U / I` from Euler's relation.
    pub fn new(sys: &MassSystem, q: &[f64]) -> Result<Self> {
        sys.check_config(q)?;
        let mut q = q.to_vec();
        sys.remove_center_of_mass(&mut q);
        let u = dynamics::potential(sys, &q)?.finite()?;
        let i = sys.inner(&q, &q);
        let lambda = sys.alpha() * u / i;
        let mut acc = vec![0.0; q.len()];
        accelerations(sys, &q, &mut acc)?;
        // the mass-metric gradient of U is the acceleration
        let r: Vec<f64> = acc.iter().zip(&q).map(|(a, x)| a + lambda * x).collect();
        Ok(CentralConfiguration {
            residual: sys.norm(&r),
            q,
            lambda,
        })
    }

    /// Same shape rescaled to `U = target`.
    pub fn scaled(&self, sys: &MassSystem, target: f64) -> Result<Self> {
        Self::new(sys, &dynamics::scaled_to_level(sys, &self.q, target)?)
    }

    /// Same shape rescaled to unit moment of inertia.
    pub fn unit(&self, sys: &MassSystem) -> Vec<f64> {
        let s = 1.0 / sys.norm(&self.q);
        self.q.iter().map(|x| s * x).collect()
    }

    /// True when all bodies lie in the first coordinate plane.
    pub fn is_planar(&self, sys: &MassSystem) -> bool {
        let d = sys.dim();
        let scale = sys.norm(&self.q);
        d >= 2 && (0..sys.n_bodies()).all(|a| (2..d).all(|k| self.q[a * d + k].abs() <= 1e-14 * scale))
    }
}

/// Rotation by a right angle in the first coordinate plane.
pub(crate) fn quarter_turn(sys: &MassSystem, q: &[f64]) -> Vec<f64> {
    let d = sys.dim();
    let mut out = vec![0.0; q.len()];
    for a in 0..sys.n_bodies() {
        out[a * d] = -q[a * d + 1];
        out[a * d + 1] = q[a * d];
    }
    out
}

fn require_newtonian_planar(sys: &MassSystem) -> Result<()> {
    if !sys.is_newtonian() {
        return Err(Error::invalid("relative equilibria are built for the Newtonian potential"));
    }
    if sys.dim() < 2 {
        return Err(Error::invalid("relative equilibria need at least two dimensions"));
    }
    Ok(())
}

/// Rigid rotation of a planar central configuration at energy `-h`: the
/// configuration is scaled to `U = 2h` and spun at `omega = sqrt(lambda)`.
pub fn relative_equilibrium(sys: &MassSystem, cc: &CentralConfiguration, level: EnergyLevel) -> Result<State> {
    require_newtonian_planar(sys)?;
    if !cc.is_planar(sys) {
        return Err(Error::invalid("central configuration is not planar"));
    }
    let cc = cc.scaled(sys, level.virial_value())?;
    let omega = cc.lambda.sqrt();
    let v = quarter_turn(sys, &cc.q).iter().map(|x| omega * x).collect();
    Ok(State::new(0.0, cc.q, v))
}

fn require_three(sys: &MassSystem) -> Result<()> {
    if sys.n_bodies() != 3 {
        return Err(Error::invalid("this family needs three bodies"));
    }
    Ok(())
}

/// Equilateral central configuration at `U = 2h`.
pub fn lagrange_configuration(sys: &MassSystem, level: EnergyLevel) -> Result<CentralConfiguration> {
    require_three(sys)?;
    require_newtonian_planar(sys)?;
    let d = sys.dim();
    let s = 3f64.sqrt() / 2.0;
    let mut q = vec![0.0; 3 * d];
    for (a, (x, y)) in [(-0.5, 0.0), (0.5, 0.0), (0.0, s)].into_iter().enumerate() {
        q[a * d] = x;
        q[a * d + 1] = y;
    }
    CentralConfiguration::new(sys, &q)?.scaled(sys, level.virial_value())
}

/// Lagrange's rigidly rotating equilateral triangle at energy `-h`.
pub fn lagrange_equilateral(sys: &MassSystem, level: EnergyLevel) -> Result<State> {
    relative_equilibrium(sys, &lagrange_configuration(sys, level)?, level)
}

/// Euler's quintic for the ratio `z = r23 / r12` of a collinear central
/// configuration with masses `m1, m2, m3` in order along the line.
pub fn euler_quintic(m1: f64, m2: f64, m3: f64, z: f64) -> f64 {
    let p = [
        -(m2 + m3),
        -(2.0 * m2 + 3.0 * m3),
        -(m2 + 3.0 * m3),
        3.0 * m1 + m2,
        3.0 * m1 + 2.0 * m2,
        m1 + m2,
    ];
    p.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

/// Positive root of Euler's quintic, isolated by bisection.
pub fn euler_ratio(m1: f64, m2: f64, m3: f64) -> Result<f64> {
    if !(m1 > 0.0 && m2 > 0.0 && m3 > 0.0) {
        return Err(Error::invalid("masses must be positive"));
    }
    let f = |z: f64| euler_quintic(m1, m2, m3, z);
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoRoot("Euler quintic has no positive root below 1e12".into()));
        }
    }
    bisect(f, 0.0, hi, 1e-15 * hi)
}

/// Collinear central configuration at `U = 2h`; `order` lists the bodies from
/// one end of the line to the other, so `order[1]` is in the middle.
pub fn euler_configuration(sys: &MassSystem, order: [usize; 3], level: EnergyLevel) -> Result<CentralConfiguration> {
    require_three(sys)?;
    require_newtonian_planar(sys)?;
    let mut seen = [false; 3];
    for &a in &order {
        if a >= 3 || std::mem::replace(&mut seen[a], true) {
            return Err(Error::invalid("ordering must be a permutation of 0, 1, 2"));
        }
    }
    let m = |k: usize| sys.mass(order[k]);
    let z = euler_ratio(m(0), m(1), m(2))?;
    let d = sys.dim();
    let mut q = vec![0.0; 3 * d];
    for (k, x) in [0.0, 1.0, 1.0 + z].into_iter().enumerate() {
        q[order[k] * d] = x;
    }
    CentralConfiguration::new(sys, &q)?.scaled(sys, level.virial_value())
}

/// Euler's rigidly rotating collinear solution at energy `-h`.
pub fn euler_collinear(sys: &MassSystem, order: [usize; 3], level: EnergyLevel) -> Result<State> {
    relative_equilibrium(sys, &euler_configuration(sys, order, level)?, level)
}
