//! Planar three-body shape space: Jacobi coordinates, the Hopf map, syzygy
//! words and level-set meshes of `U`.

mod mesh;
mod syzygy;

pub use mesh::{hill_mesh, isosurface, HillMesh, HillMeshes, MAX_RESOLUTION, MIN_RESOLUTION};
pub use syzygy::{syzygy_sequence, SyzygyEvent, SyzygyOptions, SyzygyWord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::MassSystem;

/// Image of a configuration in shape space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapePoint {
    /// Hopf image of the mass-weighted Jacobi vectors, `|w| = I/2`;
    /// `w3` has the sign of the triangle's orientation.
    pub w: [f64; 3],
    /// Shell radius `sqrt(I)`.
    pub r: f64,
}

impl ShapePoint {
    /// Point of size coordinates: direction `w/|w|`, length `r`.
    pub fn size_coords(&self) -> [f64; 3] {
        let n = norm3(&self.w);
        if n == 0.0 {
            return [0.0; 3];
        }
        let s = self.r / n;
        [s * self.w[0], s * self.w[1], s * self.w[2]]
    }

    /// Sine of the latitude, `w3/|w|`: zero exactly on collinear configurations.
    pub fn latitude(&self) -> f64 {
        let n = norm3(&self.w);
        if n == 0.0 {
            0.0
        } else {
            self.w[2] / n
        }
    }
}

pub(crate) fn norm3(x: &[f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

pub(crate) fn require_planar_three(sys: &MassSystem) -> Result<()> {
    if sys.n_bodies() != 3 || sys.dim() != 2 {
        return Err(Error::invalid("shape space is defined for three bodies in the plane"));
    }
    Ok(())
}

/// Jacobi weights `sqrt(mu1)`, `sqrt(mu2)` and the pair centre weight.
struct Jacobi {
    s1: f64,
    s2: f64,
    /// `m1 / (m1 + m2)`.
    c1: f64,
}

impl Jacobi {
    fn of(sys: &MassSystem) -> Self {
        let (m1, m2, m3) = (sys.mass(0), sys.mass(1), sys.mass(2));
        let m12 = m1 + m2;
        Jacobi {
            s1: (m1 * m2 / m12).sqrt(),
            s2: (m3 * m12 / (m12 + m3)).sqrt(),
            c1: m1 / m12,
        }
    }

    /// Complex Jacobi coordinates `(z1, z2)` as `[re, im]` pairs; `I_cm = |z1|^2 + |z2|^2`.
    fn forward(&self, q: &[f64]) -> ([f64; 2], [f64; 2]) {
        let c2 = 1.0 - self.c1;
        let mut z1 = [0.0; 2];
        let mut z2 = [0.0; 2];
        for k in 0..2 {
            z1[k] = self.s1 * (q[2 + k] - q[k]);
            z2[k] = self.s2 * (q[4 + k] - self.c1 * q[k] - c2 * q[2 + k]);
        }
        (z1, z2)
    }

    /// Centred configuration with the given Jacobi coordinates.
    fn inverse(&self, sys: &MassSystem, z1: [f64; 2], z2: [f64; 2]) -> Vec<f64> {
        let c2 = 1.0 - self.c1;
        let mut q = vec![0.0; 6];
        for k in 0..2 {
            let d12 = z1[k] / self.s1;
            let d3 = z2[k] / self.s2;
            q[k] = -c2 * d12;
            q[2 + k] = self.c1 * d12;
            q[4 + k] = d3;
        }
        sys.remove_center_of_mass(&mut q);
        q
    }
}

fn hopf(z1: [f64; 2], z2: [f64; 2]) -> [f64; 3] {
    // conj(z1) z2
    let re = z1[0] * z2[0] + z1[1] * z2[1];
    let im = z1[0] * z2[1] - z1[1] * z2[0];
    let a = z1[0] * z1[0] + z1[1] * z1[1];
    let b = z2[0] * z2[0] + z2[1] * z2[1];
    [0.5 * (a - b), re, im]
}

/// Project a planar three-body configuration to shape space.
pub fn shape_project(sys: &MassSystem, q: &[f64]) -> Result<ShapePoint> {
    require_planar_three(sys)?;
    sys.check_config(q)?;
    let (z1, z2) = Jacobi::of(sys).forward(q);
    let w = hopf(z1, z2);
    Ok(ShapePoint { w, r: (2.0 * norm3(&w)).sqrt() })
}

/// Time derivative of `w` along velocity `v`.
pub fn shape_velocity(sys: &MassSystem, q: &[f64], v: &[f64]) -> Result<[f64; 3]> {
    require_planar_three(sys)?;
    sys.check_config(q)?;
    sys.check_config(v)?;
    let j = Jacobi::of(sys);
    let (z1, z2) = j.forward(q);
    let (d1, d2) = j.forward(v);
    let re = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    let im = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
    Ok([
        re(z1, d1) - re(z2, d2),
        re(d1, z2) + re(z1, d2),
        im(d1, z2) + im(z1, d2),
    ])
}

/// A centred configuration whose size coordinates are `x`.
pub fn shape_lift(sys: &MassSystem, x: &[f64; 3]) -> Result<Vec<f64>> {
    require_planar_three(sys)?;
    let r = norm3(x);
    if !r.is_finite() {
        return Err(Error::invalid("size coordinates must be finite"));
    }
    if r == 0.0 {
        return Ok(vec![0.0; 6]);
    }
    // |w| = r^2/2 along the direction of x
    let s = 0.5 * r;
    let w = [s * x[0], s * x[1], s * x[2]];
    let nw = 0.5 * r * r;
    let a = (nw + w[0]).max(0.0);
    let b = (nw - w[0]).max(0.0);
    let (z1, z2) = if a > 0.0 {
        let m = a.sqrt();
        // z1 real, z2 = (w2 + i w3) / z1
        ([m, 0.0], [w[1] / m, w[2] / m])
    } else {
        ([0.0, 0.0], [b.sqrt(), 0.0])
    };
    Ok(Jacobi::of(sys).inverse(sys, z1, z2))
}

/// Unit direction in shape space of the binary collision of bodies `a` and `b`.
pub fn collision_ray(sys: &MassSystem, a: usize, b: usize) -> Result<[f64; 3]> {
    require_planar_three(sys)?;
    if a == b || a > 2 || b > 2 {
        return Err(Error::invalid("collision ray needs two distinct bodies among 0, 1, 2"));
    }
    let c = 3 - a - b;
    let mut q = vec![0.0; 6];
    q[2 * c] = 1.0;
    let w = shape_project(sys, &q)?.w;
    let n = norm3(&w);
    Ok([w[0] / n, w[1] / n, w[2] / n])
}

/// Body between the other two along the best-fit line of a near-collinear configuration.
pub fn middle_body(sys: &MassSystem, q: &[f64]) -> Result<usize> {
    require_planar_three(sys)?;
    sys.check_config(q)?;
    let (_, (a, b)) = (0..3)
        .flat_map(|a| (a + 1..3).map(move |b| (a, b)))
        .map(|(a, b)| (sys.pair_distance(q, a, b), (a, b)))
        .fold((f64::NEG_INFINITY, (0, 1)), |best, x| if x.0 > best.0 { x } else { best });
    Ok(3 - a - b)
}
