//! Configuration space and the mass metric.
//!
//! Configurations are flat `n_bodies * dim` slices, body-major: body `a`
//! occupies `q[a * dim..(a + 1) * dim]`. The inner product on configuration
//! space is the mass metric `<x, y> = sum_a m_a x_a . y_a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Masses, coupling constant and pair-potential homogeneity of an N-body system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMassSystem", into = "RawMassSystem")]
pub struct MassSystem {
    masses: Vec<f64>,
    g: f64,
    dim: usize,
    alpha: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMassSystem {
    masses: Vec<f64>,
    #[serde(rename = "G", default = "one")]
    g: f64,
    #[serde(default = "two")]
    dim: usize,
    #[serde(default = "one")]
    alpha: f64,
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

impl TryFrom<RawMassSystem> for MassSystem {
    type Error = Error;

    fn try_from(raw: RawMassSystem) -> Result<Self> {
        MassSystem::with_params(raw.masses, raw.g, raw.dim, raw.alpha)
    }
}

impl From<MassSystem> for RawMassSystem {
    fn from(sys: MassSystem) -> Self {
        RawMassSystem {
            masses: sys.masses,
            g: sys.g,
            dim: sys.dim,
            alpha: sys.alpha,
        }
    }
}

impl MassSystem {
    /// Newtonian system (`G = 1`, `alpha = 1`).
    pub fn new(masses: Vec<f64>, dim: usize) -> Result<Self> {
        Self::with_params(masses, 1.0, dim, 1.0)
    }

    pub fn with_params(masses: Vec<f64>, g: f64, dim: usize, alpha: f64) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::invalid("need at least two bodies"));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::invalid(format!("mass {m} is not strictly positive")));
        }
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::invalid(format!("G = {g} must be positive")));
        }
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!("dim = {dim} must be 2 or 3")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(format!("alpha = {alpha} must be positive")));
        }
        Ok(MassSystem {
            masses,
            g,
            dim,
            alpha,
        })
    }

    /// Equal unit masses, `G = 1`, Newtonian.
    pub fn equal_masses(n: usize, dim: usize) -> Result<Self> {
        Self::new(vec![1.0; n], dim)
    }

    pub fn n_bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, a: usize) -> f64 {
        self.masses[a]
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// True when the pair potential is Newtonian (`alpha = 1`).
    pub fn is_newtonian(&self) -> bool {
        self.alpha == 1.0
    }

    /// Length of a flattened configuration vector.
    pub fn config_len(&self) -> usize {
        self.masses.len() * self.dim
    }

    pub(crate) fn check_config(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.config_len() {
            return Err(Error::invalid(format!(
                "configuration has {} entries, expected {}",
                q.len(),
                self.config_len()
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("configuration has non-finite entries"));
        }
        Ok(())
    }

    pub fn body<'a>(&self, q: &'a [f64], a: usize) -> &'a [f64] {
        &q[a * self.dim..(a + 1) * self.dim]
    }

    /// Mass-metric inner product.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.dim;
        self.masses
            .iter()
            .enumerate()
            .map(|(a, m)| {
                let s: f64 = (0..d).map(|i| x[a * d + i] * y[a * d + i]).sum();
                m * s
            })
            .sum()
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).sqrt()
    }

    /// Mass-metric distance between two configurations.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.dim;
        self.masses
            .iter()
            .enumerate()
            .map(|(a, m)| {
                let s: f64 = (0..d)
                    .map(|i| {
                        let e = x[a * d + i] - y[a * d + i];
                        e * e
                    })
                    .sum();
                m * s
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Mass-weighted centroid of a configuration (or velocity).
    pub fn center_of_mass(&self, q: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut c = vec![0.0; d];
        for (a, m) in self.masses.iter().enumerate() {
            for i in 0..d {
                c[i] += m * q[a * d + i];
            }
        }
        let mt = self.total_mass();
        c.iter_mut().for_each(|x| *x /= mt);
        c
    }

    /// Subtract the centroid in place.
    pub fn remove_center_of_mass(&self, q: &mut [f64]) {
        let c = self.center_of_mass(q);
        let d = self.dim;
        for a in 0..self.n_bodies() {
            for i in 0..d {
                q[a * d + i] -= c[i];
            }
        }
    }

    pub fn pair_distance(&self, q: &[f64], a: usize, b: usize) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let e = q[a * d + i] - q[b * d + i];
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest pairwise separation and the pair attaining it.
    pub fn min_pair_distance(&self, q: &[f64]) -> (f64, (usize, usize)) {
        let n = self.n_bodies();
        let mut best = (f64::INFINITY, (0, 1));
        for a in 0..n {
            for b in a + 1..n {
                let r = self.pair_distance(q, a, b);
                if r < best.0 {
                    best = (r, (a, b));
                }
            }
        }
        best
    }
}

/// Phase point: time, positions and velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    pub fn new(t: f64, q: Vec<f64>, v: Vec<f64>) -> Self {
        State { t, q, v }
    }

    /// State with all velocities zero.
    pub fn at_rest(t: f64, q: Vec<f64>) -> Self {
        let v = vec![0.0; q.len()];
        State { t, q, v }
    }

    pub fn validate(&self, sys: &MassSystem) -> Result<()> {
        sys.check_config(&self.q)?;
        if self.v.len() != self.q.len() {
            return Err(Error::invalid("velocity and position lengths differ"));
        }
        if !self.t.is_finite() || self.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("state has non-finite entries"));
        }
        Ok(())
    }

    /// Move to the centre-of-mass frame (zero total momentum, centroid at origin).
    pub fn center(&mut self, sys: &MassSystem) {
        sys.remove_center_of_mass(&mut self.q);
        sys.remove_center_of_mass(&mut self.v);
    }

    pub fn centered(mut self, sys: &MassSystem) -> Self {
        self.center(sys);
        self
    }

    /// True when centroid and total momentum vanish within `tol`
    /// (relative to the mass-metric size of the state).
    pub fn is_centered(&self, sys: &MassSystem, tol: f64) -> bool {
        let cq = sys.center_of_mass(&self.q);
        let cv = sys.center_of_mass(&self.v);
        let sq = sys.norm(&self.q).max(1.0);
        let sv = sys.norm(&self.v).max(1.0);
        cq.iter().all(|x| x.abs() <= tol * sq) && cv.iter().all(|x| x.abs() <= tol * sv)
    }

    /// Same state with velocities negated (time reversal).
    pub fn reversed(&self) -> Self {
        State {
            t: -self.t,
            q: self.q.clone(),
            v: self.v.iter().map(|x| -x).collect(),
        }
    }
}

/// Energy level `E = -h` with `h > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct EnergyLevel(f64);

impl EnergyLevel {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 {
            Ok(EnergyLevel(h))
        } else {
            Err(Error::invalid(format!("energy level h = {h} must be positive")))
        }
    }

    /// Level of a state with negative total energy.
    pub fn from_energy(e: f64) -> Result<Self> {
        Self::new(-e)
    }

    pub fn h(self) -> f64 {
        self.0
    }

    pub fn energy(self) -> f64 {
        -self.0
    }

    /// U on the virial surface.
    pub fn virial_value(self) -> f64 {
        2.0 * self.0
    }
}

impl TryFrom<f64> for EnergyLevel {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        EnergyLevel::new(h)
    }
}

impl From<EnergyLevel> for f64 {
    fn from(l: EnergyLevel) -> f64 {
        l.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_systems() {
        assert!(MassSystem::new(vec![1.0], 2).is_err());
        assert!(MassSystem::new(vec![1.0, 0.0], 2).is_err());
        assert!(MassSystem::new(vec![1.0, -2.0], 3).is_err());
        assert!(MassSystem::new(vec![1.0, 1.0], 4).is_err());
        assert!(MassSystem::with_params(vec![1.0, 1.0], 0.0, 2, 1.0).is_err());
        assert!(MassSystem::with_params(vec![1.0, 1.0], 1.0, 2, -1.0).is_err());
        assert!(EnergyLevel::new(0.0).is_err());
        assert!(EnergyLevel::new(f64::NAN).is_err());
    }

    #[test]
    fn centering_zeroes_momentum() {
        let sys = MassSystem::new(vec![1.0, 2.0, 3.0], 2).unwrap();
        let s = State::new(0.0, vec![1.0, 2.0, -1.0, 0.5, 3.0, 3.0], vec![0.1, 0.0, 0.2, -0.3, 1.0, 1.0]);
        assert!(!s.is_centered(&sys, 1e-12));
        let s = s.centered(&sys);
        assert!(s.is_centered(&sys, 1e-12));
    }

    #[test]
    fn system_roundtrips_through_json() {
        let sys = MassSystem::with_params(vec![1.0, 0.5], 2.0, 3, 2.0).unwrap();
        let js = serde_json::to_string(&sys).unwrap();
        assert!(js.contains("\"G\":2.0"));
        let back: MassSystem = serde_json::from_str(&js).unwrap();
        assert_eq!(back, sys);
        let bad: std::result::Result<MassSystem, _> = serde_json::from_str(r#"{"masses":[1.0,-1.0]}"#);
        assert!(bad.is_err());
    }
}
