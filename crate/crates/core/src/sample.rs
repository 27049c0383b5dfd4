//! Random configurations and velocities for ensembles.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics;
use crate::error::{Error, Result};
use crate::system::MassSystem;

/// Centered configuration with bodies uniform in the unit ball, rejecting
/// draws with a pair closer than `min_sep`.
pub fn random_config<R: Rng>(sys: &MassSystem, rng: &mut R, min_sep: f64) -> Result<Vec<f64>> {
    let d = sys.dim();
    for _ in 0..10_000 {
        let mut q = vec![0.0; sys.config_len()];
        for a in 0..sys.n_bodies() {
            loop {
                let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if p.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
                    q[a * d..(a + 1) * d].copy_from_slice(&p);
                    break;
                }
            }
        }
        sys.remove_center_of_mass(&mut q);
        if sys.min_pair_distance(&q).0 >= min_sep {
            return Ok(q);
        }
    }
    Err(Error::invalid(format!("could not sample a configuration with separation {min_sep}")))
}

/// Centered Gaussian direction with unit mass-metric norm.
pub fn random_direction<R: Rng>(sys: &MassSystem, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..sys.config_len()).map(|_| rng.sample(StandardNormal)).collect();
        sys.remove_center_of_mass(&mut v);
        let nv = sys.norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Velocity along `dir` with kinetic energy `k`.
pub fn velocity_with_kinetic(sys: &MassSystem, dir: &[f64], k: f64) -> Vec<f64> {
    let s = (2.0 * k.max(0.0)).sqrt() / sys.norm(dir);
    dir.iter().map(|x| x * s).collect()
}

/// Random configuration scaled onto `U = target`.
pub fn config_on_level<R: Rng>(sys: &MassSystem, rng: &mut R, target: f64, min_sep: f64) -> Result<Vec<f64>> {
    let q = random_config(sys, rng, min_sep)?;
    dynamics::scaled_to_level(sys, &q, target)
}

/// Uniform draw in `[lo, hi]` on a log scale.
pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::member_rng;

    #[test]
    fn sampled_configs_are_centered_and_separated() {
        let sys = MassSystem::new(vec![1.0, 2.0, 0.5], 2).unwrap();
        let mut rng = member_rng(3, 0);
        for _ in 0..20 {
            let q = random_config(&sys, &mut rng, 0.2).unwrap();
            assert!(sys.min_pair_distance(&q).0 >= 0.2);
            assert!(sys.center_of_mass(&q).iter().all(|c| c.abs() < 1e-14));
            let v = velocity_with_kinetic(&sys, &random_direction(&sys, &mut rng), 0.7);
            assert!((dynamics::kinetic(&sys, &v) - 0.7).abs() < 1e-13);
            let q2 = config_on_level(&sys, &mut rng, 4.0, 0.2).unwrap();
            assert!((dynamics::potential_value(&sys, &q2).unwrap() - 4.0).abs() < 1e-12);
        }
    }
}
