//! Level sets of `U` in shape space by marching tetrahedra.

use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{require_planar_three, shape_lift};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::system::{EnergyLevel, MassSystem};

pub const MIN_RESOLUTION: usize = 4;
pub const MAX_RESOLUTION: usize = 256;

/// Field values are capped at this multiple of the level near collisions.
const CAP: f64 = 1e8;

/// Kuhn split of the unit cube: corner `c` sits at `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Triangulated surface `{U = level}` in size coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillMesh {
    pub level: f64,
    /// Half-width of the sampling box.
    pub half_width: f64,
    pub resolution: usize,
    pub vertices: Vec<[f64; 3]>,
    /// Counter-clockwise seen from the low-`U` side.
    pub faces: Vec<[usize; 3]>,
}

/// Hill boundary `U = h` and virial surface `U = 2h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillMeshes {
    pub h: f64,
    pub boundary: HillMesh,
    pub virial: HillMesh,
}

impl HillMesh {
    /// Wavefront OBJ text.
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# U = {}", self.level);
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    /// Vertex cloud as CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,z\n");
        for v in &self.vertices {
            let _ = writeln!(s, "{},{},{}", v[0], v[1], v[2]);
        }
        s
    }

    pub fn area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                0.5 * norm(&cross(&sub(&b, &a), &sub(&c, &a)))
            })
            .sum()
    }
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Natural length of the level `value`: `(G sum m_a m_b / value)^(1/alpha)`.
fn natural_length(sys: &MassSystem, value: f64) -> f64 {
    let m = sys.masses();
    let s = m[0] * m[1] + m[0] * m[2] + m[1] * m[2];
    (sys.g() * s / value).powf(1.0 / sys.alpha())
}

type EdgeKey = (usize, usize);

/// Isosurface `{U = value}` sampled on a cube of half-width `extent` natural
/// lengths with `resolution` cells per side.
pub fn isosurface(sys: &MassSystem, value: f64, resolution: usize, extent: f64, exec: Execution) -> Result<HillMesh> {
    require_planar_three(sys)?;
    if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&resolution) {
        return Err(Error::invalid(format!(
            "resolution {resolution} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]"
        )));
    }
    if !(value > 0.0 && value.is_finite() && extent > 0.0 && extent.is_finite()) {
        return Err(Error::invalid("level value and extent must be positive and finite"));
    }
    let n = resolution;
    let half_width = extent * natural_length(sys, value);
    let step = 2.0 * half_width / n as f64;
    let np = n + 1;
    let coord = |i: usize| -half_width + step * i as f64;
    let point = |g: usize| [coord(g % np), coord((g / np) % np), coord(g / (np * np))];

    let planes = map_indices(exec, np, |k| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                let q = shape_lift(sys, &[coord(i), coord(j), coord(k)])?;
                let u = dynamics::potential(sys, &q)?.value();
                out.push(u.min(CAP * value) - value);
            }
        }
        Ok(out)
    });
    let field: Vec<f64> = planes.into_iter().collect::<Result<Vec<_>>>()?.concat();

    let slabs = map_indices(exec, n, |k| {
        let mut tris: Vec<[EdgeKey; 3]> = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let base = i + np * (j + np * k);
                let corner = |c: usize| base + (c & 1) + np * ((c >> 1) & 1) + np * np * ((c >> 2) & 1);
                for tet in &TETS {
                    let g = tet.map(corner);
                    march(&g, &field, &point, &mut tris);
                }
            }
        }
        tris
    });

    let mut index: HashMap<EdgeKey, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for tri in slabs.into_iter().flatten() {
        let f = tri.map(|key| {
            *index.entry(key).or_insert_with(|| {
                let (a, b) = key;
                let (fa, fb) = (field[a], field[b]);
                let t = fa / (fa - fb);
                let (pa, pb) = (point(a), point(b));
                vertices.push([0, 1, 2].map(|d| pa[d] + t * (pb[d] - pa[d])));
                vertices.len() - 1
            })
        });
        if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
            faces.push(f);
        }
    }
    Ok(HillMesh {
        level: value,
        half_width,
        resolution,
        vertices,
        faces,
    })
}

/// Emit the triangles of one tetrahedron as edge keys, oriented so that
/// normals point from `U > value` toward `U < value`.
fn march(g: &[usize; 4], field: &[f64], point: &impl Fn(usize) -> [f64; 3], out: &mut Vec<[EdgeKey; 3]>) {
    let inside: Vec<usize> = (0..4).filter(|&v| field[g[v]] >= 0.0).collect();
    let outside: Vec<usize> = (0..4).filter(|&v| field[g[v]] < 0.0).collect();
    let edge = |a: usize, b: usize| -> EdgeKey {
        let (x, y) = (g[a], g[b]);
        if x < y {
            (x, y)
        } else {
            (y, x)
        }
    };
    let tris: Vec<[(usize, usize); 3]> = match (inside.len(), outside.len()) {
        (1, 3) => {
            let a = inside[0];
            vec![[(a, outside[0]), (a, outside[1]), (a, outside[2])]]
        }
        (3, 1) => {
            let a = outside[0];
            vec![[(inside[0], a), (inside[1], a), (inside[2], a)]]
        }
        (2, 2) => {
            let (a, b, c, d) = (inside[0], inside[1], outside[0], outside[1]);
            vec![[(a, c), (a, d), (b, d)], [(a, c), (b, d), (b, c)]]
        }
        _ => return,
    };
    let centroid = |vs: &[usize]| {
        let mut c = [0.0; 3];
        for &v in vs {
            let p = point(g[v]);
            (0..3).for_each(|d| c[d] += p[d] / vs.len() as f64);
        }
        c
    };
    let outward = sub(&centroid(&outside), &centroid(&inside));
    for t in tris {
        let p = t.map(|(a, b)| {
            let (fa, fb) = (field[g[a]], field[g[b]]);
            let s = fa / (fa - fb);
            let (pa, pb) = (point(g[a]), point(g[b]));
            [0, 1, 2].map(|d| pa[d] + s * (pb[d] - pa[d]))
        });
        let nrm = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
        let keys = t.map(|(a, b)| edge(a, b));
        if dot(&nrm, &outward) < 0.0 {
            out.push([keys[0], keys[2], keys[1]]);
        } else {
            out.push(keys);
        }
    }
}

/// Hill boundary and virial surface meshes at energy `-h`. The box scales
/// with each level, so the two meshes are exact rescalings of each other.
pub fn hill_mesh(sys: &MassSystem, level: EnergyLevel, resolution: usize, extent: f64, exec: Execution) -> Result<HillMeshes> {
    let h = level.h();
    Ok(HillMeshes {
        h,
        boundary: isosurface(sys, h, resolution, extent, exec)?,
        virial: isosurface(sys, level.virial_value(), resolution, extent, exec)?,
    })
}
