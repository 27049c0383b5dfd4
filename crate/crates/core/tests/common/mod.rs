//! Closed-form two-body oracles, independent of the library integrator.

#![allow(dead_code)]

use virlab_core::{MassSystem, State};

/// Relative Kepler orbit starting at periapsis on the +x axis, moving toward +y.
pub struct Kepler {
    pub mu: f64,
    pub a: f64,
    pub e: f64,
}

impl Kepler {
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI * (self.a.powi(3) / self.mu).sqrt()
    }

    fn eccentric_anomaly(&self, t: f64) -> f64 {
        let n = (self.mu / self.a.powi(3)).sqrt();
        let m = n * t;
        let mut ea = if self.e > 0.8 { std::f64::consts::PI } else { m };
        for _ in 0..100 {
            let f = ea - self.e * ea.sin() - m;
            let d = f / (1.0 - self.e * ea.cos());
            ea -= d;
            if d.abs() < 1e-15 {
                break;
            }
        }
        ea
    }

    /// Relative position and velocity `(x, y, vx, vy)` at time `t`.
    pub fn relative(&self, t: f64) -> [f64; 4] {
        let n = (self.mu / self.a.powi(3)).sqrt();
        let ea = self.eccentric_anomaly(t);
        let (s, c) = ea.sin_cos();
        let b = (1.0 - self.e * self.e).sqrt();
        let den = 1.0 - self.e * c;
        [
            self.a * (c - self.e),
            self.a * b * s,
            -self.a * n * s / den,
            self.a * n * b * c / den,
        ]
    }

    pub fn radius(&self, t: f64) -> f64 {
        let r = self.relative(t);
        r[0].hypot(r[1])
    }
}

/// Planar two-body state in the centre-of-mass frame at Kepler time `t`.
pub fn two_body_state(sys: &MassSystem, k: &Kepler, t: f64) -> State {
    let (m1, m2) = (sys.mass(0), sys.mass(1));
    let m = m1 + m2;
    let r = k.relative(t);
    State::new(
        t,
        vec![-m2 / m * r[0], -m2 / m * r[1], m1 / m * r[0], m1 / m * r[1]],
        vec![-m2 / m * r[2], -m2 / m * r[3], m1 / m * r[2], m1 / m * r[3]],
    )
}

/// Kepler orbit of semi-major axis `a` for the pair in `sys`.
pub fn kepler_for(sys: &MassSystem, a: f64, e: f64) -> Kepler {
    Kepler {
        mu: sys.g() * sys.total_mass(),
        a,
        e,
    }
}

/// Energy of a bound two-body orbit with semi-major axis `a`.
pub fn two_body_energy(sys: &MassSystem, a: f64) -> f64 {
    -sys.g() * sys.mass(0) * sys.mass(1) / (2.0 * a)
}

/// Radial free-fall time from rest at separation `r0` to collision.
pub fn free_fall_time(mu: f64, r0: f64) -> f64 {
    std::f64::consts::PI / 2.0 * (r0.powi(3) / (2.0 * mu)).sqrt()
}

/// Hyperbolic relative orbit at periapsis `rp` with eccentricity `e > 1`:
/// initial relative `(x, y, vx, vy)`.
pub fn hyperbolic_periapsis(mu: f64, rp: f64, e: f64) -> [f64; 4] {
    let v = (mu * (1.0 + e) / rp).sqrt();
    [rp, 0.0, 0.0, v]
}

/// Radial fall time from rest at `r_max` down to separation `r`.
pub fn radial_fall_time(mu: f64, r_max: f64, r: f64) -> f64 {
    let x = r / r_max;
    (r_max.powi(3) / (2.0 * mu)).sqrt() * ((x * (1.0 - x)).sqrt() + x.sqrt().acos())
}
