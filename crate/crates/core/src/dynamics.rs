//! Pointwise dynamical quantities: potential, mass-metric gradient, kinetic
//! energy, moment of inertia, the Lagrange-Jacobi right-hand side, angular
//! momentum and Hill-region classification.
//!
//! `U` is the *negative* of the potential energy, `U = G sum m_a m_b / r_ab^alpha`,
//! so that `E = K - U` and Newton's equations read `q'' = grad U`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{EnergyLevel, MassSystem, State};

/// Default collision-band threshold on pair separations.
pub const DEFAULT_R_MIN: f64 = 1e-8;

/// Value of the force function, with collisions as an explicit marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Finite(f64),
    Collision { a: usize, b: usize },
}

impl Potential {
    /// Numeric value, `+inf` at collisions.
    pub fn value(self) -> f64 {
        match self {
            Potential::Finite(u) => u,
            Potential::Collision { .. } => f64::INFINITY,
        }
    }

    pub fn is_collision(self) -> bool {
        matches!(self, Potential::Collision { .. })
    }

    pub fn finite(self) -> Result<f64> {
        match self {
            Potential::Finite(u) => Ok(u),
            Potential::Collision { a, b } => Err(Error::Collision { a, b }),
        }
    }
}

#[inline]
fn pair_power(r2: f64, alpha: f64) -> f64 {
    // r^-alpha from r^2
    if alpha == 1.0 {
        1.0 / r2.sqrt()
    } else if alpha == 2.0 {
        1.0 / r2
    } else {
        r2.powf(-0.5 * alpha)
    }
}

/// Force function `U(q)`; collision marker when some `r_ab = 0` exactly.
pub fn potential(sys: &MassSystem, q: &[f64]) -> Result<Potential> {
    sys.check_config(q)?;
    Ok(potential_unchecked(sys, q))
}

pub(crate) fn potential_unchecked(sys: &MassSystem, q: &[f64]) -> Potential {
    let n = sys.n_bodies();
    let d = sys.dim();
    let m = sys.masses();
    let mut u = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let mut r2 = 0.0;
            for i in 0..d {
                let e = q[a * d + i] - q[b * d + i];
                r2 += e * e;
            }
            if r2 == 0.0 {
                return Potential::Collision { a, b };
            }
            u += m[a] * m[b] * pair_power(r2, sys.alpha());
        }
    }
    Potential::Finite(sys.g() * u)
}

/// `U(q)` as a plain number, erroring at collisions.
pub fn potential_value(sys: &MassSystem, q: &[f64]) -> Result<f64> {
    potential(sys, q)?.finite()
}

/// Mass-metric gradient of `U`, i.e. the acceleration field.
pub fn grad_u(sys: &MassSystem, q: &[f64]) -> Result<Vec<f64>> {
    sys.check_config(q)?;
    let mut acc = vec![0.0; q.len()];
    accelerations(sys, q, &mut acc)?;
    Ok(acc)
}

/// Writes accelerations into `acc`. Hot path for the integrator: no shape checks.
pub fn accelerations(sys: &MassSystem, q: &[f64], acc: &mut [f64]) -> Result<()> {
    let n = sys.n_bodies();
    let d = sys.dim();
    let m = sys.masses();
    let alpha = sys.alpha();
    let g = sys.g();
    acc.iter_mut().for_each(|x| *x = 0.0);
    let mut diff = [0.0f64; 3];
    for a in 0..n {
        for b in a + 1..n {
            let mut r2 = 0.0;
            for i in 0..d {
                diff[i] = q[b * d + i] - q[a * d + i];
                r2 += diff[i] * diff[i];
            }
            if r2 == 0.0 {
                return Err(Error::Collision { a, b });
            }
            // alpha G r^-(alpha+2)
            let f = g * alpha * pair_power(r2, alpha) / r2;
            for i in 0..d {
                acc[a * d + i] += f * m[b] * diff[i];
                acc[b * d + i] -= f * m[a] * diff[i];
            }
        }
    }
    Ok(())
}

/// `K = 1/2 sum m_a |v_a|^2`.
pub fn kinetic(sys: &MassSystem, v: &[f64]) -> f64 {
    0.5 * sys.inner(v, v)
}

/// `E = K - U`.
pub fn energy(sys: &MassSystem, s: &State) -> Result<f64> {
    s.validate(sys)?;
    Ok(kinetic(sys, &s.v) - potential(sys, &s.q)?.finite()?)
}

/// `I = <q, q>` about the origin.
pub fn moment_of_inertia(sys: &MassSystem, q: &[f64]) -> f64 {
    sys.inner(q, q)
}

/// `dI/dt = 2 <q, v>`.
pub fn i_dot(sys: &MassSystem, q: &[f64], v: &[f64]) -> f64 {
    2.0 * sys.inner(q, v)
}

/// Moment of inertia about the centre of mass.
pub fn moment_of_inertia_cm(sys: &MassSystem, q: &[f64]) -> f64 {
    let mut c = q.to_vec();
    sys.remove_center_of_mass(&mut c);
    sys.inner(&c, &c)
}

/// Right-hand side of the Lagrange-Jacobi identity, `4K + 2<q, grad U> = 4K - 2 alpha U`.
///
/// For `alpha = 1` this is `4K - 2U`; for `alpha = 2` it equals `4E`.
pub fn lagrange_jacobi_rhs(sys: &MassSystem, s: &State) -> Result<f64> {
    s.validate(sys)?;
    let u = potential(sys, &s.q)?.finite()?;
    let k = kinetic(sys, &s.v);
    Ok(4.0 * k - 2.0 * sys.alpha() * u)
}

/// Angular momentum. Length 1 (z component) in the plane, length 3 in space.
pub fn angular_momentum(sys: &MassSystem, s: &State) -> Vec<f64> {
    let d = sys.dim();
    let mut j = if d == 2 { vec![0.0] } else { vec![0.0; 3] };
    for (a, m) in sys.masses().iter().enumerate() {
        let q = &s.q[a * d..(a + 1) * d];
        let v = &s.v[a * d..(a + 1) * d];
        if d == 2 {
            j[0] += m * (q[0] * v[1] - q[1] * v[0]);
        } else {
            j[0] += m * (q[1] * v[2] - q[2] * v[1]);
            j[1] += m * (q[2] * v[0] - q[0] * v[2]);
            j[2] += m * (q[0] * v[1] - q[1] * v[0]);
        }
    }
    j
}

pub fn angular_momentum_norm(sys: &MassSystem, s: &State) -> f64 {
    angular_momentum(sys, s).iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Total linear momentum.
pub fn linear_momentum(sys: &MassSystem, v: &[f64]) -> Vec<f64> {
    let d = sys.dim();
    let mut p = vec![0.0; d];
    for (a, m) in sys.masses().iter().enumerate() {
        for i in 0..d {
            p[i] += m * v[a * d + i];
        }
    }
    p
}

/// Region of a configuration relative to an energy level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HillRegion {
    /// `U < h`: inaccessible at energy `-h`.
    Exterior,
    Interior,
    /// `|U - h|` within the band tolerance.
    BoundaryBand,
    /// Some pair closer than the collision floor.
    CollisionBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillClass {
    pub region: HillRegion,
    /// Sign of `U - 2h` (0 within the band tolerance).
    pub virial_side: i8,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillBands {
    /// Relative band width, applied as `band * h`.
    pub band: f64,
    pub r_min: f64,
}

impl Default for HillBands {
    fn default() -> Self {
        HillBands {
            band: 1e-9,
            r_min: DEFAULT_R_MIN,
        }
    }
}

pub fn hill_membership(
    sys: &MassSystem,
    q: &[f64],
    level: EnergyLevel,
    bands: HillBands,
) -> Result<HillClass> {
    sys.check_config(q)?;
    let h = level.h();
    let (rmin, _) = sys.min_pair_distance(q);
    let u = potential_unchecked(sys, q).value();
    let tol = bands.band * h;
    let virial_side = if (u - 2.0 * h).abs() <= tol {
        0
    } else if u > 2.0 * h {
        1
    } else {
        -1
    };
    let region = if rmin < bands.r_min {
        HillRegion::CollisionBand
    } else if (u - h).abs() <= tol {
        HillRegion::BoundaryBand
    } else if u < h {
        HillRegion::Exterior
    } else {
        HillRegion::Interior
    };
    Ok(HillClass {
        region,
        virial_side,
        u,
    })
}

/// Scale factor `lambda` with `U(lambda q) = target` (homogeneity of degree `-alpha`).
pub fn scale_to_level(sys: &MassSystem, q: &[f64], target: f64) -> Result<f64> {
    let u = potential_value(sys, q)?;
    if !(target > 0.0) {
        return Err(Error::invalid("target potential must be positive"));
    }
    Ok((u / target).powf(1.0 / sys.alpha()))
}

/// Configuration `lambda q` scaled onto the level set `U = target`.
pub fn scaled_to_level(sys: &MassSystem, q: &[f64], target: f64) -> Result<Vec<f64>> {
    let lam = scale_to_level(sys, q, target)?;
    Ok(q.iter().map(|x| x * lam).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equilateral() -> Vec<f64> {
        let s3 = 3f64.sqrt();
        vec![0.0, 1.0 / s3, -0.5, -0.5 / s3, 0.5, -0.5 / s3]
    }

    #[test]
    fn potential_examples() {
        let sys = MassSystem::equal_masses(3, 2).unwrap();
        let u = potential_value(&sys, &equilateral()).unwrap();
        assert!((u - 3.0).abs() < 1e-14);

        let two = MassSystem::equal_masses(2, 3).unwrap();
        let q = [1.0, 0.0, 0.0, -1.0, 0.0, 0.0];
        assert!((potential_value(&two, &q).unwrap() - 0.5).abs() < 1e-15);

        let q = [0.3, 0.2, 0.0, 0.3, 0.2, 0.0];
        let p = potential(&two, &q).unwrap();
        assert_eq!(p, Potential::Collision { a: 0, b: 1 });
        assert_eq!(p.value(), f64::INFINITY);
        assert!(matches!(grad_u(&two, &q), Err(Error::Collision { .. })));
        assert!(potential(&two, &[f64::NAN, 0.0, 0.0, 1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn two_body_acceleration_is_newton() {
        let sys = MassSystem::new(vec![1.0, 3.0], 2).unwrap();
        let q = [-1.0, 0.0, 1.0, 0.0];
        let a = grad_u(&sys, &q).unwrap();
        // body 0 pulled toward body 1 with G m_1 / r^2 = 3/4
        assert!((a[0] - 0.75).abs() < 1e-15 && a[1].abs() < 1e-15);
        assert!((a[2] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn kinetic_and_inertia_examples() {
        let sys = MassSystem::equal_masses(2, 3).unwrap();
        assert_eq!(kinetic(&sys, &[0.0; 6]), 0.0);
        let one = MassSystem::new(vec![1.0, 1.0], 2).unwrap();
        assert!((kinetic(&one, &[2.0, 0.0, 0.0, 0.0]) - 2.0).abs() < 1e-15);
        let q = [1.0, 0.0, 0.0, -1.0, 0.0, 0.0];
        assert!((moment_of_inertia(&sys, &q) - 2.0).abs() < 1e-15);
        assert_eq!(moment_of_inertia(&sys, &[0.0; 6]), 0.0);
    }

    #[test]
    fn brake_state_energy_and_momentum() {
        let sys = MassSystem::equal_masses(3, 2).unwrap();
        let s = State::at_rest(0.0, equilateral());
        assert!((energy(&sys, &s).unwrap() + 3.0).abs() < 1e-14);
        assert_eq!(angular_momentum(&sys, &s), vec![0.0]);
    }

    #[test]
    fn hill_membership_examples() {
        let sys = MassSystem::equal_masses(3, 2).unwrap();
        let q = equilateral();
        let b = HillBands::default();
        let c = hill_membership(&sys, &q, EnergyLevel::new(3.0).unwrap(), b).unwrap();
        assert_eq!(c.region, HillRegion::BoundaryBand);
        let c = hill_membership(&sys, &q, EnergyLevel::new(1.5).unwrap(), b).unwrap();
        assert_eq!(c.region, HillRegion::Interior);
        assert_eq!(c.virial_side, 0);
        let c = hill_membership(&sys, &q, EnergyLevel::new(4.0).unwrap(), b).unwrap();
        assert_eq!(c.region, HillRegion::Exterior);
        assert_eq!(c.virial_side, -1);
        let near = [0.0, 0.0, 1e-9, 0.0, 1.0, 1.0];
        let c = hill_membership(&sys, &near, EnergyLevel::new(1.0).unwrap(), b).unwrap();
        assert_eq!(c.region, HillRegion::CollisionBand);
        assert_eq!(c.virial_side, 1);
    }

    #[test]
    fn alpha_two_rhs_is_four_e() {
        let sys = MassSystem::with_params(vec![1.0, 2.0, 0.5], 1.0, 3, 2.0).unwrap();
        let s = State::new(
            0.0,
            vec![0.1, 0.2, 0.3, -1.0, 0.4, 0.0, 0.5, -0.7, 0.2],
            vec![0.3, 0.0, -0.1, 0.2, 0.2, 0.2, -0.5, 0.1, 0.0],
        );
        let e = energy(&sys, &s).unwrap();
        assert!((lagrange_jacobi_rhs(&sys, &s).unwrap() - 4.0 * e).abs() < 1e-13);
    }

    #[test]
    fn scaling_onto_level() {
        let sys = MassSystem::equal_masses(3, 2).unwrap();
        let q = scaled_to_level(&sys, &equilateral(), 1.25).unwrap();
        assert!((potential_value(&sys, &q).unwrap() - 1.25).abs() < 1e-14);
    }
}
