//! Jacobi-Maupertuis geometry: lengths in the metric `2(U - h) |dq|^2`,
//! discrete geodesics to the brake point, scaling asymptotics, sampled
//! diameters and mountain-pass profiles.
//!
//! The whole Hill boundary is one point of the metric completion (the brake
//! point), so a path may end anywhere on `{U = h}` at no cost.

use serde::{Deserialize, Serialize};

use crate::brake::{orthonormal_complement, translations};
use crate::dynamics::{self, accelerations, potential_unchecked, Potential, DEFAULT_R_MIN};
use crate::error::{Error, Result};
use crate::exec::{map_indices, member_rng, Execution};
use crate::integrate::{propagate, PropagateOptions, Trajectory};
use crate::numeric::{golden_max, nelder_mead, NelderMeadOptions};
use crate::sample;
use crate::system::{EnergyLevel, MassSystem, State};

/// Relative width of the Hill-boundary band.
pub const BOUNDARY_BAND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointTag {
    Interior,
    BrakePoint,
    CollisionCapped,
}

/// Discrete path with per-segment JM lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JMPath {
    pub level: EnergyLevel,
    pub nodes: Vec<Vec<f64>>,
    /// Closed loops carry an extra segment from the last node to the first.
    pub closed: bool,
    pub tags: [EndpointTag; 2],
    pub lengths: Vec<f64>,
}

impl JMPath {
    pub fn new(sys: &MassSystem, level: EnergyLevel, nodes: Vec<Vec<f64>>, closed: bool) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid("a path needs at least two nodes"));
        }
        let mut tags = Vec::with_capacity(nodes.len());
        for q in &nodes {
            tags.push(node_tag(sys, q, level.h())?);
        }
        let lengths = segment_lengths(sys, &nodes, level.h(), closed)?;
        Ok(JMPath {
            level,
            tags: [tags[0], tags[tags.len() - 1]],
            nodes,
            closed,
            lengths,
        })
    }

    pub fn length(&self) -> f64 {
        self.lengths.iter().sum()
    }
}

/// Classify a node; errors outside the Hill region beyond the band.
pub fn node_tag(sys: &MassSystem, q: &[f64], h: f64) -> Result<EndpointTag> {
    sys.check_config(q)?;
    if sys.min_pair_distance(q).0 < DEFAULT_R_MIN {
        return Ok(EndpointTag::CollisionCapped);
    }
    let u = potential_unchecked(sys, q).value();
    if u < h * (1.0 - BOUNDARY_BAND) {
        return Err(Error::OutsideHillRegion { u, h });
    }
    Ok(if u <= h * (1.0 + BOUNDARY_BAND) {
        EndpointTag::BrakePoint
    } else {
        EndpointTag::Interior
    })
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// Midpoint-rule segment lengths `sqrt(2(U(mid) - h)) |b - a|`, with the
/// conformal factor clamped at zero; `h = 0` gives the zero-energy metric.
pub fn segment_lengths(sys: &MassSystem, nodes: &[Vec<f64>], h: f64, closed: bool) -> Result<Vec<f64>> {
    let m = nodes.len();
    let segs = if closed { m } else { m.saturating_sub(1) };
    let mut out = Vec::with_capacity(segs);
    for i in 0..segs {
        let (a, b) = (&nodes[i], &nodes[(i + 1) % m]);
        let mid = midpoint(a, b);
        let u = dynamics::potential(sys, &mid)?.finite()?;
        let c = (2.0 * (u - h)).max(0.0).sqrt();
        out.push(c * sys.distance(a, b));
    }
    Ok(out)
}

/// Sub-segments per segment for resolved lengths.
pub const RESOLVE: usize = 32;

/// Each segment split into `k` equal pieces.
pub fn subdivided(nodes: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let mut out = vec![nodes[0].clone()];
    for w in nodes.windows(2) {
        for i in 1..=k {
            let t = i as f64 / k as f64;
            out.push(w[0].iter().zip(&w[1]).map(|(a, b)| a + t * (b - a)).collect());
        }
    }
    out
}

pub fn jm_length(path: &JMPath) -> f64 {
    path.length()
}

/// Path through `n + 1` dense-output samples of `traj` on `[lo, hi]`.
pub fn sampled_path(traj: &Trajectory, level: EnergyLevel, lo: f64, hi: f64, n: usize) -> Result<JMPath> {
    traj.check_window(lo, hi)?;
    let nodes = (0..=n)
        .map(|k| traj.state_at(lo + (hi - lo) * k as f64 / n as f64).map(|s| s.q))
        .collect::<Result<Vec<_>>>()?;
    JMPath::new(traj.sys(), level, nodes, false)
}

/// Length of the path with every node multiplied by `lambda`, at energy `-h` (`h >= 0`).
pub fn scaled_length(sys: &MassSystem, nodes: &[Vec<f64>], h: f64, lambda: f64, closed: bool) -> Result<f64> {
    if !(lambda > 0.0) || !(h >= 0.0) {
        return Err(Error::invalid("scaling needs lambda > 0 and h >= 0"));
    }
    let scaled: Vec<Vec<f64>> = nodes.iter().map(|q| q.iter().map(|x| lambda * x).collect()).collect();
    for q in &scaled {
        let (r, (a, b)) = sys.min_pair_distance(q);
        if r < DEFAULT_R_MIN {
            return Err(Error::Collision { a, b });
        }
    }
    Ok(segment_lengths(sys, &scaled, h, closed)?.iter().sum())
}

/// `L(lambda * path) / L(path)` for a path strictly inside the Hill region.
pub fn scaling_length_ratio(sys: &MassSystem, path: &JMPath, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::invalid(format!("lambda = {lambda} outside (0, 1]")));
    }
    if path.tags.iter().any(|t| *t != EndpointTag::Interior) {
        return Err(Error::Precondition("loop must lie strictly inside the Hill region".into()));
    }
    let h = path.level.h();
    Ok(scaled_length(sys, &path.nodes, h, lambda, path.closed)? / path.length())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicOptions {
    /// Initial number of segments.
    pub segments: usize,
    pub max_iter: usize,
    /// Stationarity: preconditioned gradient norm times the length scale, relative to the length.
    pub grad_tol: f64,
    /// Barrier onset as a fraction of the rms radius of the start point.
    pub r_pen: f64,
    /// Barrier weight relative to the initial length.
    pub barrier: f64,
    /// Double the nodes where `U - h` is within the last decade.
    pub refine: bool,
    /// Extra starts from perturbed straight lines.
    pub restarts: usize,
    pub perturbation: f64,
    pub seed: u64,
    /// Nelder-Mead polish of the brake point against the re-integrated orbit.
    pub polish: bool,
    pub polish_evals: usize,
    pub tol: f64,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            segments: 24,
            max_iter: 20_000,
            grad_tol: 1e-9,
            r_pen: 1e-3,
            barrier: 1e-2,
            refine: true,
            restarts: 2,
            perturbation: 0.1,
            seed: 0,
            polish: true,
            polish_evals: 300,
            tol: 1e-12,
        }
    }
}

/// Closest pass of a re-integrated brake orbit to the target point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub time: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicResult {
    /// Discrete minimizer from the start point to the brake point.
    pub path: JMPath,
    pub length: f64,
    /// Length of the node polyline, each segment split into `RESOLVE` pieces.
    pub resolved_length: f64,
    /// Length of the straight chord to the radial boundary point, at the same resolution.
    pub straight_length: f64,
    /// Brake configuration used for the re-integrated orbit.
    pub brake_point: Vec<f64>,
    /// Travel time along the minimizer, `sum |dq| / sqrt(2(U - h))`.
    pub travel_time: f64,
    pub unpolished: Verification,
    pub verification: Verification,
    pub min_separation: f64,
    /// Absolute barrier onset.
    pub r_pen: f64,
    pub collision_free: bool,
    pub converged: bool,
    pub iterations: usize,
    pub restart: usize,
    pub seed: u64,
}

/// Discrete chain `start, x_1, .., x_{k}, end` with a fixed or free endpoint.
struct Chain<'a> {
    sys: &'a MassSystem,
    h: f64,
    start: Vec<f64>,
    /// `None`: free endpoint on the Hill boundary, on the ray through the last node.
    end: Option<Vec<f64>>,
    interior: usize,
    r_pen: f64,
    weight: f64,
    minv: Vec<f64>,
    /// Target share of each segment; the objective is `sum L_i^2 / w_i`.
    seg_w: Vec<f64>,
    /// Plain length `sum L_i` instead.
    length_only: bool,
    /// Per-node directions removed from the descent direction.
    tangents: Option<Vec<Vec<f64>>>,
}

impl<'a> Chain<'a> {
    fn new(sys: &'a MassSystem, h: f64, start: &[f64], end: Option<Vec<f64>>, interior: usize, r_pen: f64) -> Self {
        let d = sys.dim();
        let minv = (0..interior * sys.config_len())
            .map(|k| 1.0 / sys.mass((k % sys.config_len()) / d))
            .collect();
        Chain {
            sys,
            h,
            start: start.to_vec(),
            end,
            interior,
            r_pen,
            weight: 0.0,
            minv,
            seg_w: vec![1.0; interior + 1],
            length_only: false,
            tangents: None,
        }
    }

    fn n(&self) -> usize {
        self.sys.config_len()
    }

    /// Boundary point on the ray through `p`.
    fn boundary_point(&self, p: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
        match potential_unchecked(self.sys, p) {
            Potential::Finite(u) if u > 0.0 => {
                let s = (u / self.h).powf(1.0 / self.sys.alpha());
                Some((p.iter().map(|x| s * x).collect(), s, u))
            }
            _ => None,
        }
    }

    fn nodes(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        let n = self.n();
        let mut nodes = Vec::with_capacity(self.interior + 2);
        nodes.push(self.start.clone());
        for i in 0..self.interior {
            nodes.push(x[i * n..(i + 1) * n].to_vec());
        }
        match &self.end {
            Some(e) => nodes.push(e.clone()),
            None => {
                let p = nodes.last()?.clone();
                nodes.push(self.boundary_point(&p)?.0);
            }
        }
        Some(nodes)
    }

    /// Objective and its Euclidean gradient; `+inf` when infeasible.
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let sys = self.sys;
        let n = self.n();
        let d = sys.dim();
        let nodes = match self.nodes(x) {
            Some(v) => v,
            None => return f64::INFINITY,
        };
        let last = nodes.len() - 1;
        for q in &nodes[1..last] {
            match potential_unchecked(sys, q) {
                Potential::Finite(u) if u >= self.h => {}
                _ => return f64::INFINITY,
            }
        }
        let mut gq = vec![vec![0.0; n]; nodes.len()];
        let mut acc = vec![0.0; n];
        let mut f = 0.0;
        for i in 0..last {
            let (a, b) = (&nodes[i], &nodes[i + 1]);
            let mid = midpoint(a, b);
            let u = match potential_unchecked(sys, &mid) {
                Potential::Finite(u) if u > self.h => u,
                _ => return f64::INFINITY,
            };
            let c = (2.0 * (u - self.h)).sqrt();
            let delta: Vec<f64> = b.iter().zip(a.iter()).map(|(p, q)| p - q).collect();
            let len = sys.norm(&delta);
            let (add, fac) = if self.length_only {
                (c * len, 1.0)
            } else {
                let w = self.seg_w[i];
                ((c * len).powi(2) / w, 2.0 * c * len / w)
            };
            f += add;
            if c > 0.0 {
                if accelerations(sys, &mid, &mut acc).is_err() {
                    return f64::INFINITY;
                }
                let k = fac * 0.5 * len / c;
                for j in 0..n {
                    let e = k * sys.mass(j / d) * acc[j];
                    gq[i][j] += e;
                    gq[i + 1][j] += e;
                }
            }
            if len > 0.0 {
                for j in 0..n {
                    let e = fac * c * sys.mass(j / d) * delta[j] / len;
                    gq[i][j] -= e;
                    gq[i + 1][j] += e;
                }
            }
        }
        if self.weight > 0.0 {
            let nb = sys.n_bodies();
            for i in 1..last {
                let q = &nodes[i];
                for a in 0..nb {
                    for b in a + 1..nb {
                        let r = sys.pair_distance(q, a, b);
                        if r < self.r_pen {
                            let l = (self.r_pen / r).ln();
                            f += self.weight * l * l;
                            let dr = -2.0 * self.weight * l / r;
                            for k in 0..d {
                                let e = dr * (q[a * d + k] - q[b * d + k]) / r;
                                gq[i][a * d + k] += e;
                                gq[i][b * d + k] -= e;
                            }
                        }
                    }
                }
            }
        }
        for i in 0..self.interior {
            grad[i * n..(i + 1) * n].copy_from_slice(&gq[i + 1]);
        }
        if self.end.is_none() && self.interior > 0 {
            let p = &x[(self.interior - 1) * n..];
            let (_, s, u) = match self.boundary_point(p) {
                Some(v) => v,
                None => return f64::INFINITY,
            };
            if accelerations(sys, p, &mut acc).is_err() {
                return f64::INFINITY;
            }
            let gm = &gq[last];
            let pg: f64 = p.iter().zip(gm).map(|(a, b)| a * b).sum();
            let k = s / (sys.alpha() * u) * pg;
            let out = &mut grad[(self.interior - 1) * n..];
            for j in 0..n {
                // d(s p)/dp applied to the endpoint gradient; grad_E U = m acc
                out[j] += s * gm[j] + k * sys.mass(j / d) * acc[j];
            }
        }
        f
    }

    /// Preconditioned descent direction, projected to centered blocks.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut dir: Vec<f64> = g.iter().zip(&self.minv).map(|(a, b)| -a * b).collect();
        for (i, block) in dir.chunks_mut(n).enumerate() {
            self.sys.remove_center_of_mass(block);
            if let Some(t) = self.tangents.as_ref().map(|t| &t[i]) {
                let tt = self.sys.inner(t, t);
                if tt > 0.0 {
                    let k = self.sys.inner(block, t) / tt;
                    block.iter_mut().zip(t).for_each(|(x, y)| *x -= k * y);
                }
            }
        }
        dir
    }
}

struct Descent {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Barzilai-Borwein gradient descent with Armijo backtracking.
fn descend(chain: &Chain, x0: Vec<f64>, max_iter: usize, grad_tol: f64, scale: f64) -> Descent {
    let mut x = x0;
    let mut g = vec![0.0; x.len()];
    let mut f = chain.eval(&x, &mut g);
    if !f.is_finite() || x.is_empty() {
        return Descent {
            converged: x.is_empty() && f.is_finite(),
            x,
            f,
            iterations: 0,
        };
    }
    let mut step = f64::NAN;
    let mut flat = 0;
    let mut converged = false;
    let mut it = 0;
    let mut xt = vec![0.0; x.len()];
    let mut gt = vec![0.0; x.len()];
    while it < max_iter {
        let dir = chain.direction(&g);
        let gd: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let gnorm = (-gd).max(0.0).sqrt();
        if gnorm * scale <= grad_tol * f.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        if !step.is_finite() {
            step = 0.05 * scale / gnorm;
        }
        let mut t = step;
        let ft = loop {
            xt.iter_mut().zip(x.iter().zip(&dir)).for_each(|(o, (a, b))| *o = a + t * b);
            let ft = chain.eval(&xt, &mut gt);
            if ft <= f + 1e-4 * t * gd {
                break Some(ft);
            }
            t *= 0.5;
            if t * gnorm < 1e-15 * scale {
                break None;
            }
        };
        it += 1;
        let Some(ft) = ft else {
            // no decrease along the steepest direction: stationary to rounding
            converged = gnorm * scale <= 1e3 * grad_tol * f;
            break;
        };
        let mut sy = 0.0;
        let mut ss = 0.0;
        for k in 0..x.len() {
            let s = xt[k] - x[k];
            sy += s * (gt[k] - g[k]);
            ss += s * s / chain.minv[k];
        }
        step = if sy > 0.0 { ss / sy } else { 2.0 * t };
        flat = if f - ft <= 1e-15 * f { flat + 1 } else { 0 };
        std::mem::swap(&mut x, &mut xt);
        std::mem::swap(&mut g, &mut gt);
        f = ft;
        if flat >= 50 {
            converged = gnorm * scale <= 1e3 * grad_tol * f;
            break;
        }
    }
    Descent {
        x,
        f,
        iterations: it,
        converged,
    }
}

fn rms_radius(sys: &MassSystem, q: &[f64]) -> f64 {
    (dynamics::moment_of_inertia_cm(sys, q) / sys.total_mass()).sqrt()
}

/// Node parameters clustered toward the far end.
fn clustered(m: usize) -> Vec<f64> {
    (0..=m).map(|i| 1.0 - (1.0 - i as f64 / m as f64).powi(2)).collect()
}

/// Insert midpoints into segments whose midpoint lies within `frac * (U0 - h)` of the boundary.
fn refine_near_boundary(
    sys: &MassSystem,
    nodes: &[Vec<f64>],
    weights: &[f64],
    h: f64,
    frac: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let u0 = potential_unchecked(sys, &nodes[0]).value();
    let mut out = vec![nodes[0].clone()];
    let mut w_out = Vec::new();
    for (w, &wt) in nodes.windows(2).zip(weights) {
        let mid = midpoint(&w[0], &w[1]);
        let u = potential_unchecked(sys, &mid).value();
        if u - h < frac * (u0 - h) {
            out.push(mid);
            w_out.extend([0.5 * wt, 0.5 * wt]);
        } else {
            w_out.push(wt);
        }
        out.push(w[1].clone());
    }
    (out, w_out)
}

fn flatten(nodes: &[Vec<f64>]) -> Vec<f64> {
    nodes.iter().flatten().copied().collect()
}

/// Minimal-length search from `q0` to the brake point from one initial path.
fn brake_chain_minimize(
    sys: &MassSystem,
    h: f64,
    q0: &[f64],
    init: Vec<Vec<f64>>,
    opts: &GeodesicOptions,
) -> Option<(Vec<Vec<f64>>, usize, bool)> {
    let scale = rms_radius(sys, q0);
    let r_pen = opts.r_pen * scale;
    let chain = |nodes: &[Vec<f64>], weights: &[f64]| {
        let mut c = Chain::new(sys, h, q0, None, nodes.len() - 2, r_pen);
        c.seg_w = weights.to_vec();
        c
    };
    let run = |nodes: &[Vec<f64>], weights: &[f64], weight_rel: f64| -> Option<(Vec<Vec<f64>>, usize, bool)> {
        let mut chain = chain(nodes, weights);
        let x = flatten(&nodes[1..nodes.len() - 1]);
        let mut g = vec![0.0; x.len()];
        let f0 = chain.eval(&x, &mut g);
        if !f0.is_finite() {
            return None;
        }
        chain.weight = weight_rel * f0;
        let r = descend(&chain, x, opts.max_iter, opts.grad_tol, scale);
        if !r.f.is_finite() {
            return None;
        }
        Some((chain.nodes(&r.x)?, r.iterations, r.converged))
    };
    // a stalled stage that touched the boundary early is cut there and rerun
    let stage = |nodes: Vec<Vec<f64>>, weights: Vec<f64>, weight_rel: f64| {
        let (mut nodes, mut weights, mut iters) = (nodes, weights, 0);
        loop {
            let (out, it, converged) = run(&nodes, &weights, weight_rel)?;
            iters += it;
            match boundary_contact(sys, h, &out) {
                Some(k) if !converged => {
                    nodes = out[..=k].to_vec();
                    weights.truncate(k);
                }
                _ => return Some((out, weights, iters, converged)),
            }
        }
    };
    let init_w = vec![1.0; init.len() - 1];
    let (mut nodes, mut weights, mut iters, _) = stage(init, init_w, opts.barrier)?;
    if opts.refine {
        (nodes, weights) = refine_near_boundary(sys, &nodes, &weights, h, 0.1);
        let (n2, w2, i2, _) = stage(nodes, weights, opts.barrier)?;
        (nodes, weights) = (n2, w2);
        iters += i2;
    }
    let (mut nodes, mut weights, i3, mut converged) = stage(nodes, weights, 0.0)?;
    iters += i3;
    // finish on the length itself, with nodes held from sliding along the path
    loop {
        let mut lc = chain(&nodes, &weights);
        lc.length_only = true;
        lc.tangents = Some(tangents(&nodes));
        let r = descend(&lc, flatten(&nodes[1..nodes.len() - 1]), opts.max_iter, opts.grad_tol, scale);
        if !r.f.is_finite() {
            return None;
        }
        iters += r.iterations;
        let out = lc.nodes(&r.x)?;
        match boundary_contact(sys, h, &out) {
            Some(k) if !r.converged => {
                nodes = out[..=k].to_vec();
                weights.truncate(k);
            }
            _ => {
                converged &= r.converged;
                return Some((out, iters, converged));
            }
        }
    }
}

/// First interior node on the Hill boundary, where the path has already reached the brake point.
fn boundary_contact(sys: &MassSystem, h: f64, nodes: &[Vec<f64>]) -> Option<usize> {
    let last = nodes.len() - 1;
    (1..last).find(|&k| potential_unchecked(sys, &nodes[k]).value() <= h * (1.0 + BOUNDARY_BAND))
}

/// Central-difference tangents at interior nodes.
fn tangents(nodes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    nodes
        .windows(3)
        .map(|w| w[2].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
        .collect()
}

/// Travel time along a path: `sum |dq| / sqrt(2(U(mid) - h))`.
pub fn travel_time(sys: &MassSystem, nodes: &[Vec<f64>], h: f64) -> f64 {
    nodes
        .windows(2)
        .map(|w| {
            let mid = midpoint(&w[0], &w[1]);
            let c = (2.0 * (potential_unchecked(sys, &mid).value() - h)).max(0.0).sqrt();
            if c > 0.0 {
                sys.distance(&w[0], &w[1]) / c
            } else {
                0.0
            }
        })
        .sum()
}

/// Closest pass to `target` of the orbit released from rest at `q_star`, over `[0, horizon]`.
pub fn closest_pass(sys: &MassSystem, q_star: &[f64], target: &[f64], horizon: f64, tol: f64) -> Result<Verification> {
    let popts = PropagateOptions {
        strict_drift: false,
        ..PropagateOptions::with_tol(tol).no_events()
    };
    let traj = propagate(&State::at_rest(0.0, q_star.to_vec()), sys, horizon, &popts)?;
    let (lo, hi) = traj.span();
    let dist = |t: f64| traj.state_at(t).map_or(f64::INFINITY, |s| sys.distance(&s.q, target));
    let n = 400;
    let ts: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let (ib, _) = ts
        .iter()
        .map(|&t| dist(t))
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, d)| if d < b.1 { (i, d) } else { b });
    let a = ts[ib.saturating_sub(1)];
    let b = ts[(ib + 1).min(n)];
    let (t, nd) = golden_max(|t| -dist(t), a, b, 1e-12 * (1.0 + hi.abs()));
    Ok(Verification { time: t, distance: -nd })
}

/// Numerical witness that some brake orbit passes through `q0`: a local
/// minimizer of JM length from `q0` to the brake point, re-integrated as a
/// Newton solution released from its boundary endpoint.
pub fn geodesic_to_brake(
    q0: &[f64],
    level: EnergyLevel,
    sys: &MassSystem,
    opts: &GeodesicOptions,
    exec: Execution,
) -> Result<GeodesicResult> {
    let h = level.h();
    sys.check_config(q0)?;
    let mut q0 = q0.to_vec();
    sys.remove_center_of_mass(&mut q0);
    let u0 = dynamics::potential(sys, &q0)?.finite()?;
    if u0 < h * (1.0 - BOUNDARY_BAND) {
        return Err(Error::OutsideHillRegion { u: u0, h });
    }
    let scale = rms_radius(sys, &q0);
    let r_pen = opts.r_pen * scale;
    let radial = dynamics::scaled_to_level(sys, &q0, h)?;
    if u0 <= h * (1.0 + BOUNDARY_BAND) {
        let path = JMPath::new(sys, level, vec![q0.clone(), q0.clone()], false)?;
        let at = Verification { time: 0.0, distance: 0.0 };
        return Ok(GeodesicResult {
            path,
            length: 0.0,
            resolved_length: 0.0,
            straight_length: 0.0,
            brake_point: q0.clone(),
            travel_time: 0.0,
            unpolished: at,
            verification: at,
            min_separation: sys.min_pair_distance(&q0).0,
            r_pen,
            collision_free: sys.min_pair_distance(&q0).0 > r_pen,
            converged: true,
            iterations: 0,
            restart: 0,
            seed: opts.seed,
        });
    }
    let chord = vec![q0.clone(), radial.clone()];

    let m = opts.segments.max(2);
    let params = clustered(m);
    let starts = map_indices(exec, opts.restarts + 1, |r| {
        let mut end = radial.clone();
        let mut bump = vec![0.0; q0.len()];
        if r > 0 {
            let mut rng = member_rng(opts.seed, r);
            let amp = opts.perturbation * sys.norm(&q0);
            bump = sample::random_direction(sys, &mut rng).iter().map(|x| amp * x).collect();
            let shift = sample::random_direction(sys, &mut rng);
            let moved: Vec<f64> = radial.iter().zip(&shift).map(|(a, b)| a + amp * b).collect();
            if let Ok(e) = dynamics::scaled_to_level(sys, &moved, h) {
                end = e;
            }
        }
        let init: Vec<Vec<f64>> = params
            .iter()
            .map(|&s| {
                let w = (std::f64::consts::PI * s).sin();
                (0..q0.len()).map(|j| q0[j] + s * (end[j] - q0[j]) + w * bump[j]).collect()
            })
            .collect();
        brake_chain_minimize(sys, h, &q0, init, opts)
    });
    let mut best: Option<(usize, Vec<Vec<f64>>, usize, bool, f64)> = None;
    for (r, res) in starts.into_iter().enumerate() {
        let Some((nodes, iters, conv)) = res else { continue };
        let len: f64 = match segment_lengths(sys, &nodes, h, false) {
            Ok(l) => l.iter().sum(),
            Err(_) => continue,
        };
        let sep = min_separation(sys, &nodes);
        let ok = sep > r_pen;
        let better = match &best {
            None => true,
            Some(b) => {
                let b_ok = min_separation(sys, &b.1) > r_pen;
                (ok && !b_ok) || (ok == b_ok && len < b.4)
            }
        };
        if better {
            best = Some((r, nodes, iters, conv, len));
        }
    }
    let Some((restart, nodes, iterations, converged, length)) = best else {
        return Err(Error::OptimizerStall("no restart produced a finite path".into()));
    };
    if !converged {
        return Err(Error::OptimizerStall(format!(
            "descent did not reach stationarity in {} iterations",
            opts.max_iter
        )));
    }
    let min_sep = min_separation(sys, &nodes);
    let resolved_length = segment_lengths(sys, &subdivided(&nodes, RESOLVE), h, false)?.iter().sum();
    let chord_pieces = RESOLVE * (nodes.len() - 1);
    let straight_length = segment_lengths(sys, &subdivided(&chord, chord_pieces), h, false)?.iter().sum();
    let t_path = travel_time(sys, &nodes, h);
    let horizon = 2.0 * t_path + 1e-3;
    let q_star = nodes[nodes.len() - 1].clone();
    let unpolished = closest_pass(sys, &q_star, &q0, horizon, opts.tol)?;
    let (brake_point, verification) = if opts.polish && unpolished.distance > 1e-9 * scale {
        polish_brake_point(sys, h, &q_star, &q0, horizon, unpolished, opts)?
    } else {
        (q_star.clone(), unpolished)
    };
    let path = JMPath::new(sys, level, nodes, false)?;
    Ok(GeodesicResult {
        path,
        length,
        resolved_length,
        straight_length,
        brake_point,
        travel_time: t_path,
        unpolished,
        verification,
        min_separation: min_sep,
        r_pen,
        collision_free: min_sep > r_pen,
        converged,
        iterations,
        restart,
        seed: opts.seed,
    })
}

/// Smallest pair separation over nodes and segment midpoints.
fn min_separation(sys: &MassSystem, nodes: &[Vec<f64>]) -> f64 {
    let mut r = f64::INFINITY;
    for w in nodes.windows(2) {
        r = r.min(sys.min_pair_distance(&w[0]).0);
        r = r.min(sys.min_pair_distance(&midpoint(&w[0], &w[1])).0);
    }
    r.min(sys.min_pair_distance(&nodes[nodes.len() - 1]).0)
}

/// Slide the brake point along the boundary to bring the orbit onto the target.
fn polish_brake_point(
    sys: &MassSystem,
    h: f64,
    q_star: &[f64],
    target: &[f64],
    horizon: f64,
    start: Verification,
    opts: &GeodesicOptions,
) -> Result<(Vec<f64>, Verification)> {
    let mut fixed = translations(sys);
    fixed.push(q_star.to_vec());
    let dirs = orthonormal_complement(sys, fixed);
    let scale = sys.norm(q_star);
    let point = |x: &[f64]| -> Result<Vec<f64>> {
        let mut q = q_star.to_vec();
        for (c, d) in x.iter().zip(&dirs) {
            q.iter_mut().zip(d).for_each(|(a, b)| *a += scale * c * b);
        }
        dynamics::scaled_to_level(sys, &q, h)
    };
    let objective = |x: &[f64]| -> f64 {
        point(x)
            .and_then(|q| closest_pass(sys, &q, target, horizon, opts.tol))
            .map_or(f64::INFINITY, |v| v.distance)
    };
    let step = (start.distance / scale).clamp(1e-8, 1e-2);
    let res = nelder_mead(
        objective,
        &vec![0.0; dirs.len()],
        step,
        NelderMeadOptions {
            max_evals: opts.polish_evals,
            f_tol: 1e-14 * scale,
            x_tol: 1e-14,
        },
    );
    if res.f < start.distance {
        let q = point(&res.x)?;
        let v = closest_pass(sys, &q, target, horizon, opts.tol)?;
        Ok((q, v))
    } else {
        Ok((q_star.to_vec(), start))
    }
}

/// Locally minimal JM length between two fixed points.
pub fn geodesic_between(
    a: &[f64],
    b: &[f64],
    level: EnergyLevel,
    sys: &MassSystem,
    opts: &GeodesicOptions,
) -> Result<(JMPath, bool)> {
    let h = level.h();
    let m = opts.segments.max(2);
    let nodes: Vec<Vec<f64>> = (0..=m)
        .map(|i| {
            let s = i as f64 / m as f64;
            a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
        })
        .collect();
    let scale = rms_radius(sys, a).max(rms_radius(sys, b));
    let chain = Chain::new(sys, h, a, Some(b.to_vec()), m - 1, opts.r_pen * scale);
    let r = descend(&chain, flatten(&nodes[1..m]), opts.max_iter, opts.grad_tol, scale);
    if !r.f.is_finite() {
        return Err(Error::OptimizerStall("straight chord leaves the Hill region".into()));
    }
    let nodes = chain.nodes(&r.x).ok_or_else(|| Error::OptimizerStall("degenerate endpoint".into()))?;
    Ok((JMPath::new(sys, level, nodes, false)?, r.converged))
}

/// Length-only brake distance, without re-integration.
fn brake_distance(q: &[f64], level: EnergyLevel, sys: &MassSystem, opts: &GeodesicOptions) -> Option<f64> {
    let h = level.h();
    let u = potential_unchecked(sys, q).value();
    if u <= h * (1.0 + BOUNDARY_BAND) {
        return Some(0.0);
    }
    let radial = dynamics::scaled_to_level(sys, q, h).ok()?;
    let init: Vec<Vec<f64>> = clustered(opts.segments.max(2))
        .iter()
        .map(|&s| q.iter().zip(&radial).map(|(a, b)| a + s * (b - a)).collect())
        .collect();
    let (nodes, _, conv) = brake_chain_minimize(sys, h, q, init, opts)?;
    if !conv {
        return None;
    }
    Some(segment_lengths(sys, &nodes, h, false).ok()?.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterPair {
    /// `U / h` of the two points.
    pub shells: (f64, f64),
    pub direct: Option<f64>,
    /// Route through the brake point.
    pub via_brake: f64,
    pub length: f64,
}

/// Empirical, non-certifying diameter evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterSample {
    pub max: f64,
    pub pairs: Vec<DiameterPair>,
    pub failed: usize,
    pub certifying: bool,
}

/// Minimized connecting lengths for `n_pairs` random shape pairs, each scaled
/// onto every pair of shells `U = c h` with `c` from `shells`. Adding shells
/// only adds pairs.
pub fn diameter_sample(
    level: EnergyLevel,
    sys: &MassSystem,
    n_pairs: usize,
    shells: &[f64],
    seed: u64,
    opts: &GeodesicOptions,
    exec: Execution,
) -> Result<DiameterSample> {
    if shells.is_empty() || shells.iter().any(|c| !(*c >= 1.0)) {
        return Err(Error::invalid("shell ratios U/h must be >= 1"));
    }
    let h = level.h();
    let ns = shells.len();
    let combos: Vec<(usize, usize, usize)> = (0..n_pairs)
        .flat_map(|i| (0..ns).flat_map(move |a| (a..ns).map(move |b| (i, a, b))))
        .collect();
    let runs = map_indices(exec, combos.len(), |k| -> Option<DiameterPair> {
        let (i, ia, ib) = combos[k];
        let mut rng = member_rng(seed, i);
        let a = sample::random_config(sys, &mut rng, 0.05).ok()?;
        let b = sample::random_config(sys, &mut rng, 0.05).ok()?;
        let (ca, cb) = (shells[ia], shells[ib]);
        let a = dynamics::scaled_to_level(sys, &a, ca * h).ok()?;
        let b = dynamics::scaled_to_level(sys, &b, cb * h).ok()?;
        let via = brake_distance(&a, level, sys, opts)? + brake_distance(&b, level, sys, opts)?;
        let direct = match geodesic_between(&a, &b, level, sys, opts) {
            Ok((p, true)) => Some(p.length()),
            _ => None,
        };
        Some(DiameterPair {
            shells: (ca, cb),
            direct,
            via_brake: via,
            length: direct.map_or(via, |d| d.min(via)),
        })
    });
    let failed = runs.iter().filter(|r| r.is_none()).count();
    let pairs: Vec<DiameterPair> = runs.into_iter().flatten().collect();
    Ok(DiameterSample {
        max: pairs.iter().map(|p| p.length).fold(0.0, f64::max),
        pairs,
        failed,
        certifying: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub lambda: f64,
    pub length: f64,
    pub crosses_virial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MountainPass {
    pub lambda_star: f64,
    pub max_length: f64,
    pub crosses_virial: bool,
    pub endpoint_lengths: (f64, f64),
    pub profile: Vec<ProfilePoint>,
}

/// Relative band for a loop touching `U = 2h`; a flat maximum fixes its
/// argmax only to about the square root of machine precision.
pub const VIRIAL_BAND: f64 = 1e-6;

/// Whether the closed loop meets `{U = 2h}`.
fn loop_crosses_virial(sys: &MassSystem, nodes: &[Vec<f64>], h: f64) -> Result<bool> {
    let v = 2.0 * h;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (i, q) in nodes.iter().enumerate() {
        let next = &nodes[(i + 1) % nodes.len()];
        for p in [q.clone(), midpoint(q, next)] {
            let u = dynamics::potential(sys, &p)?.value();
            lo = lo.min(u);
            hi = hi.max(u);
        }
    }
    Ok(lo <= v * (1.0 + VIRIAL_BAND) && hi >= v * (1.0 - VIRIAL_BAND))
}

/// Default scan grid: the two valleys `1e-7` and `1` plus `n` interior points.
pub fn pass_grid(n: usize) -> Vec<f64> {
    let mut g = vec![1e-7];
    g.extend((1..=n).map(|i| i as f64 / (n + 1) as f64));
    g.push(1.0);
    g
}

/// Scan a one-parameter family of closed loops for its longest member.
pub fn mountain_pass_profile<F>(sys: &MassSystem, level: EnergyLevel, family: F, grid: &[f64]) -> Result<MountainPass>
where
    F: Fn(f64) -> Result<Vec<Vec<f64>>>,
{
    if grid.len() < 3 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("grid must be increasing with at least three points"));
    }
    let h = level.h();
    let length = |lam: f64| -> Result<f64> { Ok(segment_lengths(sys, &family(lam)?, h, true)?.iter().sum()) };
    let mut profile = Vec::with_capacity(grid.len());
    for &lam in grid {
        let nodes = family(lam)?;
        profile.push(ProfilePoint {
            lambda: lam,
            length: segment_lengths(sys, &nodes, h, true)?.iter().sum(),
            crosses_virial: loop_crosses_virial(sys, &nodes, h)?,
        });
    }
    let (ib, _) = profile
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, p)| if p.length > b.1 { (i, p.length) } else { b });
    let a = grid[ib.saturating_sub(1)];
    let b = grid[(ib + 1).min(grid.len() - 1)];
    let (lambda_star, max_length) = golden_max(|l| length(l).unwrap_or(f64::NEG_INFINITY), a, b, 1e-10);
    let (lambda_star, max_length) = if max_length >= profile[ib].length {
        (lambda_star, max_length)
    } else {
        (grid[ib], profile[ib].length)
    };
    let ends = (profile[0].length, profile[profile.len() - 1].length);
    if !(ends.0 < 1e-3 * max_length && ends.1 < 1e-3 * max_length) {
        return Err(Error::Precondition(format!(
            "family endpoints are not valleys: lengths {:?} against max {max_length}",
            ends
        )));
    }
    Ok(MountainPass {
        lambda_star,
        max_length,
        crosses_virial: loop_crosses_virial(sys, &family(lambda_star)?, h)?,
        endpoint_lengths: ends,
        profile,
    })
}

/// Rigid rotations of a configuration through a full turn in the first coordinate plane.
pub fn rotation_loop(sys: &MassSystem, q: &[f64], n: usize) -> Vec<Vec<f64>> {
    let d = sys.dim();
    (0..n)
        .map(|k| {
            let (s, c) = (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin_cos();
            let mut r = q.to_vec();
            for a in 0..sys.n_bodies() {
                let (x, y) = (q[a * d], q[a * d + 1]);
                r[a * d] = c * x - s * y;
                r[a * d + 1] = s * x + c * y;
            }
            r
        })
        .collect()
}

/// Scaling family `lambda -> lambda * loop` of a loop placed on the Hill boundary.
pub fn scaling_family(
    sys: &MassSystem,
    level: EnergyLevel,
    nodes: &[Vec<f64>],
) -> Result<impl Fn(f64) -> Result<Vec<Vec<f64>>>> {
    let on_boundary = nodes
        .iter()
        .map(|q| dynamics::scaled_to_level(sys, q, level.h()))
        .collect::<Result<Vec<_>>>()?;
    Ok(move |lam: f64| Ok(on_boundary.iter().map(|q| q.iter().map(|x| lam * x).collect()).collect()))
}
