//! Syzygy words: the sequence of collinear instants labelled by the middle body.

use serde::{Deserialize, Serialize};

use super::{middle_body, norm3, require_planar_three, shape_project, shape_velocity};
use crate::error::Result;
use crate::integrate::{Termination, Trajectory};
use crate::numeric::{brent_root, golden_max};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyzygyOptions {
    /// Latitude samples per trajectory segment.
    pub samples_per_segment: usize,
    /// Transversality floor on `|dw3/dt| / (|z| |dz/dt|)` at a crossing.
    pub floor: f64,
    /// A local minimum of `|w3|/|w|` below this without a sign change is a graze.
    pub graze_tol: f64,
    /// The whole trajectory is collinear when `|w3|/|w|` never exceeds this.
    pub degenerate_tol: f64,
}

impl Default for SyzygyOptions {
    fn default() -> Self {
        SyzygyOptions {
            samples_per_segment: 8,
            floor: 1e-6,
            graze_tol: 1e-8,
            degenerate_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyzygyEvent {
    pub t: f64,
    /// Middle body, labelled 1, 2 or 3.
    pub symbol: u8,
    /// Normalized crossing rate `|dw3/dt| / (|z| |dz/dt|)`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyzygyWord {
    pub events: Vec<SyzygyEvent>,
    /// Times of tangential contacts with the collinear plane, excluded from the word.
    pub grazes: Vec<f64>,
    /// The trajectory stays collinear throughout.
    pub degenerate: bool,
    /// The trajectory ended at a near-collision, so the word stops there.
    pub truncated: bool,
}

impl SyzygyWord {
    pub fn symbols(&self) -> Vec<u8> {
        self.events.iter().map(|e| e.symbol).collect()
    }

    pub fn word(&self) -> String {
        self.events.iter().map(|e| char::from(b'0' + e.symbol)).collect()
    }
}

/// Collinear instants of a planar three-body trajectory.
pub fn syzygy_sequence(traj: &Trajectory, opts: &SyzygyOptions) -> Result<SyzygyWord> {
    let sys = traj.sys();
    require_planar_three(sys)?;
    let lat = |t: f64| -> f64 {
        traj.state_at(t)
            .ok()
            .and_then(|s| shape_project(sys, &s.q).ok())
            .map_or(f64::NAN, |p| p.latitude())
    };
    let n = opts.samples_per_segment.max(2);
    let mut ts = Vec::new();
    for seg in traj.segments() {
        for k in 0..n {
            ts.push(seg.t0 + (seg.t1 - seg.t0) * k as f64 / n as f64);
        }
    }
    ts.push(traj.span().1);
    ts.dedup();
    let vals: Vec<f64> = ts.iter().map(|&t| lat(t)).collect();
    let truncated = traj.termination == Termination::CollisionProximity;
    if vals.iter().all(|v| v.abs() <= opts.degenerate_tol) {
        return Ok(SyzygyWord {
            events: Vec::new(),
            grazes: Vec::new(),
            degenerate: true,
            truncated,
        });
    }

    let mut roots = Vec::new();
    let mut grazes = Vec::new();
    let root_in = |a: f64, b: f64| brent_root(lat, a, b, 1e-14 * (1.0 + b.abs()), 200);
    for i in 0..vals.len() - 1 {
        let (a, b) = (ts[i], ts[i + 1]);
        if vals[i] == 0.0 {
            roots.push(a);
        } else if vals[i] * vals[i + 1] < 0.0 {
            roots.push(root_in(a, b)?);
        } else if i > 0 && vals[i - 1] * vals[i] > 0.0 && vals[i].abs() < vals[i - 1].abs() && vals[i].abs() <= vals[i + 1].abs() {
            // local dip toward the collinear plane between samples
            let lo = ts[i - 1];
            let (tm, neg_abs) = golden_max(|t| -lat(t).abs(), lo, b, 1e-13 * (1.0 + b.abs()));
            let sm = lat(tm);
            if sm * vals[i] < 0.0 {
                roots.push(root_in(lo, tm)?);
                roots.push(root_in(tm, b)?);
            } else if -neg_abs <= opts.graze_tol {
                grazes.push(tm);
            }
        }
    }
    if *vals.last().unwrap() == 0.0 {
        roots.push(*ts.last().unwrap());
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));

    let mut events = Vec::new();
    for t in roots {
        let s = traj.state_at(t)?.centered(sys);
        let dw = shape_velocity(sys, &s.q, &s.v)?;
        let p = shape_project(sys, &s.q)?;
        let speed = (sys.norm(&s.q) * sys.norm(&s.v)).max(f64::MIN_POSITIVE);
        let rate = dw[2].abs() / speed;
        if rate > opts.floor && norm3(&p.w) > 0.0 {
            events.push(SyzygyEvent {
                t,
                symbol: middle_body(sys, &s.q)? as u8 + 1,
                rate,
            });
        } else {
            grazes.push(t);
        }
    }
    grazes.sort_by(f64::total_cmp);
    Ok(SyzygyWord {
        events,
        grazes,
        degenerate: false,
        truncated,
    })
}
