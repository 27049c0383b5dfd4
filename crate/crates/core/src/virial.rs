//! Time averages, virial crossings, thickness, the k-ruler, growth of the
//! moment of inertia, and escape energetics.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, potential_value};
use crate::error::{Error, Result};
use crate::integrate::{detect_events, transverse, EventKind, EventSpec, Trajectory};
use crate::numeric::{golden_max, linear_fit};
use crate::system::{EnergyLevel, MassSystem, State};

/// Averaging window `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Self {
        Window { lo, hi }
    }

    /// `[center - half, center + half]`.
    pub fn symmetric(center: f64, half: f64) -> Self {
        Window {
            lo: center - half,
            hi: center + half,
        }
    }

    /// `[start, start + len]`: the positive-time half-trajectory.
    pub fn one_sided(start: f64, len: f64) -> Self {
        Window {
            lo: start,
            hi: start + len,
        }
    }

    pub fn full(traj: &Trajectory) -> Self {
        let (lo, hi) = traj.span();
        Window { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub window: Window,
    pub avg_k: f64,
    pub avg_u: f64,
    /// `2 avg_k - avg_u`.
    pub residual: f64,
}

pub fn windowed_averages(traj: &Trajectory, window: Window) -> Result<Averages> {
    let sys = traj.sys();
    traj.check_window(window.lo, window.hi)?;
    let avg_k = traj.average(window.lo, window.hi, |s| Ok(dynamics::kinetic(sys, &s.v)))?;
    let avg_u = traj.average(window.lo, window.hi, |s| potential_value(sys, &s.q))?;
    Ok(Averages {
        window,
        avg_k,
        avg_u,
        residual: 2.0 * avg_k - avg_u,
    })
}

/// k-ruler coordinate `2h/U - 1`: 1 on the Hill boundary, 0 on the virial surface, -1 at collision.
pub fn k_ruler(u: f64, level: EnergyLevel) -> Result<f64> {
    let h = level.h();
    if u.is_infinite() && u > 0.0 {
        return Ok(-1.0);
    }
    if !(u >= h) {
        return Err(Error::OutsideHillRegion { u, h });
    }
    Ok(2.0 * h / u - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thickness {
    /// Windowed thickness: a lower bound for the orbit's true thickness.
    pub k: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub window: Window,
}

/// Minimal `k` with `2h/(1+k) <= U <= 2h/(1-k)` over the window.
pub fn thickness(traj: &Trajectory, level: EnergyLevel, window: Option<Window>) -> Result<Thickness> {
    let h = level.h();
    if (traj.e0 + h).abs() > 1e-6 * h {
        return Err(Error::InconsistentEnergy(format!(
            "trajectory energy {} does not match level -{}",
            traj.e0, h
        )));
    }
    let window = window.unwrap_or_else(|| Window::full(traj));
    let (u_min, u_max) = u_extremes(traj, window)?;
    let band = 1e-9 * h;
    if u_min < h - band {
        return Err(Error::InconsistentEnergy(format!("U = {u_min} below h = {h} along the trajectory")));
    }
    let k_boundary = (2.0 * h / u_min - 1.0).min(1.0);
    let k_collision = if u_max.is_finite() { 1.0 - 2.0 * h / u_max } else { 1.0 };
    let k = k_boundary.max(k_collision).clamp(0.0, 1.0);
    Ok(Thickness {
        k,
        u_min,
        u_max,
        window,
    })
}

/// Extremes of `U` over the window, refined on the dense output.
pub fn u_extremes(traj: &Trajectory, window: Window) -> Result<(f64, f64)> {
    traj.check_window(window.lo, window.hi)?;
    let sys = traj.sys();
    let u_at = |t: f64| -> f64 {
        traj.state_at(t)
            .ok()
            .and_then(|s| potential_value(sys, &s.q).ok())
            .unwrap_or(f64::NAN)
    };
    // grid: 8 points per segment clipped to the window
    let mut grid = Vec::new();
    for seg in traj.segments() {
        if seg.t1 < window.lo || seg.t0 > window.hi {
            continue;
        }
        let a = seg.t0.max(window.lo);
        let b = seg.t1.min(window.hi);
        for k in 0..8 {
            grid.push(a + (b - a) * k as f64 / 8.0);
        }
    }
    grid.push(window.hi);
    let vals: Vec<f64> = grid.iter().map(|&t| u_at(t)).collect();
    if vals.iter().any(|v| v.is_nan()) {
        return Err(Error::Collision { a: 0, b: 0 });
    }
    let mut u_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    for i in 0..vals.len() {
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(grid.len() - 1)];
        let is_max = (i == 0 || vals[i] >= vals[i - 1]) && (i + 1 == vals.len() || vals[i] >= vals[i + 1]);
        let is_min = (i == 0 || vals[i] <= vals[i - 1]) && (i + 1 == vals.len() || vals[i] <= vals[i + 1]);
        if is_max {
            let (_, m) = golden_max(u_at, lo, hi, 1e-13 * (1.0 + hi.abs()));
            u_max = u_max.max(m.max(vals[i]));
        }
        if is_min {
            let (_, m) = golden_max(|t| -u_at(t), lo, hi, 1e-13 * (1.0 + hi.abs()));
            u_min = u_min.min((-m).min(vals[i]));
        }
    }
    Ok((u_min, u_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnulusSide {
    Inside,
    /// `h <= U < 2h/(1+k)`.
    BoundarySide,
    /// `U > 2h/(1-k)`.
    CollisionSide,
}

/// Classify a potential value against the virial annulus of thickness `k`.
pub fn annulus_side(u: f64, level: EnergyLevel, k: f64) -> Result<AnnulusSide> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::invalid(format!("annulus thickness {k} outside [0, 1]")));
    }
    let h = level.h();
    if u < h * (1.0 - 1e-9) {
        return Err(Error::OutsideHillRegion { u, h });
    }
    let lo = 2.0 * h / (1.0 + k);
    let hi = if k < 1.0 { 2.0 * h / (1.0 - k) } else { f64::INFINITY };
    let eps = 1e-12 * 2.0 * h;
    Ok(if u < lo - eps {
        AnnulusSide::BoundarySide
    } else if u > hi + eps {
        AnnulusSide::CollisionSide
    } else {
        AnnulusSide::Inside
    })
}

pub fn annulus_membership(sys: &MassSystem, q: &[f64], level: EnergyLevel, k: f64) -> Result<AnnulusSide> {
    let u = dynamics::potential(sys, q)?.value();
    annulus_side(u, level, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum GrowthClass {
    Bounded,
    Subquadratic,
    Quadratic { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub class: GrowthClass,
    /// Tail slope of `log I` against `log t`.
    pub exponent: f64,
    pub r2: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PollardOptions {
    /// Windows shorter than this are flagged low-confidence.
    pub t_min: f64,
    /// Fraction of the span (at its end) used for the fit.
    pub tail_fraction: f64,
    /// Exponent below this counts as bounded.
    pub bounded_below: f64,
    /// Exponent above `2 - quadratic_margin` counts as quadratic.
    pub quadratic_margin: f64,
}

impl Default for PollardOptions {
    fn default() -> Self {
        PollardOptions {
            t_min: 100.0,
            tail_fraction: 0.5,
            bounded_below: 0.25,
            quadratic_margin: 0.1,
        }
    }
}

/// Growth class of the centre-of-mass moment of inertia over the forward span.
pub fn pollard_classify(traj: &Trajectory, opts: &PollardOptions) -> Result<Growth> {
    let sys = traj.sys();
    let (t0, t1) = traj.span();
    let len = t1 - t0;
    if !(len > 0.0) {
        return Err(Error::invalid("empty trajectory"));
    }
    let ta = t0 + (1.0 - opts.tail_fraction) * len;
    let ta = ta.max(t0 + 1e-3 * len);
    let n = 400;
    let mut lx = Vec::with_capacity(n);
    let mut ly = Vec::with_capacity(n);
    let mut tt = Vec::with_capacity(n);
    let mut sq = Vec::with_capacity(n);
    for k in 0..n {
        // log-spaced in elapsed time
        let e = ((ta - t0).ln() + ((t1 - t0).ln() - (ta - t0).ln()) * k as f64 / (n - 1) as f64).exp();
        let t = (t0 + e).min(t1);
        let s = traj.state_at(t)?;
        let i = dynamics::moment_of_inertia_cm(sys, &s.q);
        lx.push(e.ln());
        ly.push(i.ln());
        tt.push(e);
        sq.push(i.sqrt());
    }
    let (_, slope, r2) = linear_fit(&lx, &ly);
    let class = if slope < opts.bounded_below {
        GrowthClass::Bounded
    } else if slope > 2.0 - opts.quadratic_margin {
        let (_, b, _) = linear_fit(&tt, &sq);
        GrowthClass::Quadratic { c: b * b }
    } else {
        GrowthClass::Subquadratic
    };
    Ok(Growth {
        class,
        exponent: slope,
        r2,
        low_confidence: len < opts.t_min,
    })
}

/// Binary/escaper decomposition of a three-body configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiSplit {
    pub escaper: usize,
    pub pair: (usize, usize),
}

impl JacobiSplit {
    pub fn new(escaper: usize) -> Result<Self> {
        let pair = match escaper {
            0 => (1, 2),
            1 => (0, 2),
            2 => (0, 1),
            _ => return Err(Error::invalid("escaper index must be 0, 1 or 2")),
        };
        Ok(JacobiSplit { escaper, pair })
    }

    /// The body farthest from the centre of mass of the other two.
    pub fn detect(sys: &MassSystem, q: &[f64]) -> Result<Self> {
        if sys.n_bodies() != 3 {
            return Err(Error::invalid("Jacobi split needs three bodies"));
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for k in 0..3 {
            let s = JacobiSplit::new(k)?;
            let (xi, _) = s.outer(sys, q, q);
            let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r > best.0 {
                best = (r, k);
            }
        }
        JacobiSplit::new(best.1)
    }

    fn outer(&self, sys: &MassSystem, q: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = sys.dim();
        let (a, b) = self.pair;
        let (ma, mb) = (sys.mass(a), sys.mass(b));
        let k = self.escaper;
        let xi = (0..d)
            .map(|i| q[k * d + i] - (ma * q[a * d + i] + mb * q[b * d + i]) / (ma + mb))
            .collect();
        let dxi = (0..d)
            .map(|i| v[k * d + i] - (ma * v[a * d + i] + mb * v[b * d + i]) / (ma + mb))
            .collect();
        (xi, dxi)
    }

    /// Reduced mass of the outer Jacobi vector.
    pub fn mu(&self, sys: &MassSystem) -> f64 {
        let mb = sys.mass(self.pair.0) + sys.mass(self.pair.1);
        let mk = sys.mass(self.escaper);
        mk * mb / (mk + mb)
    }

    /// Two-body energy and semi-major axis of the inner pair (`a = inf` if unbound).
    pub fn pair_orbit(&self, sys: &MassSystem, s: &State) -> (f64, f64) {
        let d = sys.dim();
        let (a, b) = self.pair;
        let (ma, mb) = (sys.mass(a), sys.mass(b));
        let mu = ma * mb / (ma + mb);
        let mut r2 = 0.0;
        let mut w2 = 0.0;
        for i in 0..d {
            r2 += (s.q[a * d + i] - s.q[b * d + i]).powi(2);
            w2 += (s.v[a * d + i] - s.v[b * d + i]).powi(2);
        }
        let e = 0.5 * mu * w2 - sys.g() * ma * mb / r2.sqrt().powf(sys.alpha());
        let sma = if e < 0.0 { -sys.g() * ma * mb / (2.0 * e) } else { f64::INFINITY };
        (e, sma)
    }

    /// Outer separation `|xi|`, radial speed and speed.
    pub fn outer_motion(&self, sys: &MassSystem, s: &State) -> (f64, f64, f64) {
        let (xi, dxi) = self.outer(sys, &s.q, &s.v);
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let w = dxi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rdot = xi.iter().zip(&dxi).map(|(a, b)| a * b).sum::<f64>() / r;
        (r, rdot, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeCriteria {
    /// Outer separation must exceed this multiple of the pair's semi-major axis.
    pub separation_factor: f64,
    /// Fraction of the window end over which the radial speed must stay positive.
    pub sustain_fraction: f64,
}

impl Default for EscapeCriteria {
    fn default() -> Self {
        EscapeCriteria {
            separation_factor: 50.0,
            sustain_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeSide {
    pub split: JacobiSplit,
    pub v_inf: f64,
    pub k_hyper: f64,
    pub mu: f64,
    pub separation: f64,
    pub pair_semi_major: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeRecord {
    pub plus: EscapeSide,
    pub minus: Option<EscapeSide>,
    pub averages: Averages,
    /// `2 K_hyper` one-sided, `K+ + K-` two-sided.
    pub predicted: f64,
    /// `|residual - predicted| / predicted`.
    pub relative_error: f64,
}

/// Estimate the escape energetics at one end of the trajectory.
///
/// `toward_future` selects the end at `t1` (else `t0`).
pub fn escape_side(
    traj: &Trajectory,
    split: Option<JacobiSplit>,
    toward_future: bool,
    criteria: &EscapeCriteria,
) -> Result<EscapeSide> {
    let sys = traj.sys();
    if sys.n_bodies() != 3 {
        return Err(Error::Classification("escape analysis needs three bodies".into()));
    }
    let (t0, t1) = traj.span();
    let end = if toward_future { t1 } else { t0 };
    let s_end = traj.state_at(end)?;
    let split = match split {
        Some(s) => s,
        None => JacobiSplit::detect(sys, &s_end.q)?,
    };
    let (_, sma) = split.pair_orbit(sys, &s_end);
    if !sma.is_finite() {
        return Err(Error::Classification("the remaining pair is not bound".into()));
    }
    let sign = if toward_future { 1.0 } else { -1.0 };
    let len = t1 - t0;
    let ta = end - sign * criteria.sustain_fraction * len;
    let n = 200;
    let mut inv_r = Vec::with_capacity(n);
    let mut w2 = Vec::with_capacity(n);
    let mut r_end = 0.0;
    for k in 0..n {
        let t = ta + (end - ta) * k as f64 / (n - 1) as f64;
        let s = traj.state_at(t)?;
        let (r, rdot, w) = split.outer_motion(sys, &s);
        if rdot * sign <= 0.0 {
            return Err(Error::Classification(format!("outer separation not growing at t = {t}")));
        }
        inv_r.push(1.0 / r);
        w2.push(w * w);
        r_end = r;
    }
    if r_end < criteria.separation_factor * sma {
        return Err(Error::Classification(format!(
            "outer separation {r_end} below {} x pair semi-major axis {sma}",
            criteria.separation_factor
        )));
    }
    // |xi'|^2 = v_inf^2 + 2 G M / |xi| + ...: intercept of the tail fit
    let (v2, _, _) = linear_fit(&inv_r, &w2);
    if !(v2 > 0.0) {
        return Err(Error::Classification("non-positive asymptotic speed".into()));
    }
    let mu = split.mu(sys);
    Ok(EscapeSide {
        split,
        v_inf: v2.sqrt(),
        k_hyper: 0.5 * mu * v2,
        mu,
        separation: r_end,
        pair_semi_major: sma,
    })
}

/// Check `2<K> - <U> = 2 K_hyper` (one-sided, window starting at `t0`) or
/// `= K+ + K-` (two-sided, whole span).
pub fn hyperbolic_virial(
    traj: &Trajectory,
    split: Option<JacobiSplit>,
    two_sided: bool,
    criteria: &EscapeCriteria,
) -> Result<EscapeRecord> {
    let plus = escape_side(traj, split, true, criteria)?;
    let (minus, predicted) = if two_sided {
        let m = escape_side(traj, None, false, criteria)?;
        (Some(m), plus.k_hyper + m.k_hyper)
    } else {
        (None, 2.0 * plus.k_hyper)
    };
    let averages = windowed_averages(traj, Window::full(traj))?;
    Ok(EscapeRecord {
        plus,
        minus,
        averages,
        predicted,
        relative_error: (averages.residual - predicted).abs() / predicted,
    })
}

/// Longest excursions on either side of the virial surface, for near-miss scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideStretch {
    /// Longest interval with `U > 2h`.
    pub above: (f64, f64),
    /// Longest interval with `U < 2h`.
    pub below: (f64, f64),
    pub crossings: usize,
    /// `<U> / 2h` over the window.
    pub avg_u_ratio: f64,
}

pub fn side_stretch(traj: &Trajectory, level: EnergyLevel, window: Window) -> Result<SideStretch> {
    let sys = traj.sys();
    let spec = EventSpec::only(&[EventKind::VirialCrossing]).with_level(level);
    let evs = detect_events(traj, &spec)?;
    let mut cuts: Vec<f64> = vec![window.lo];
    cuts.extend(
        transverse(&evs, EventKind::VirialCrossing)
            .map(|e| e.t)
            .filter(|t| *t > window.lo && *t < window.hi),
    );
    cuts.push(window.hi);
    let mut above = (window.lo, window.lo);
    let mut below = (window.lo, window.lo);
    for w in cuts.windows(2) {
        let mid = traj.state_at(0.5 * (w[0] + w[1]))?;
        let u = potential_value(sys, &mid.q)?;
        let slot = if u > level.virial_value() { &mut above } else { &mut below };
        if w[1] - w[0] > slot.1 - slot.0 {
            *slot = (w[0], w[1]);
        }
    }
    let av = windowed_averages(traj, window)?;
    Ok(SideStretch {
        above,
        below,
        crossings: cuts.len() - 2,
        avg_u_ratio: av.avg_u / level.virial_value(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirialReport {
    pub window: Window,
    pub avg_k: f64,
    pub avg_u: f64,
    pub residual: f64,
    pub crossings: usize,
    pub thickness_k: Option<f64>,
    pub growth: Option<Growth>,
    pub escape: Option<EscapeRecord>,
}

/// Averages, crossings, windowed thickness and growth class over a window.
pub fn virial_report(traj: &Trajectory, level: Option<EnergyLevel>, window: Window) -> Result<VirialReport> {
    let av = windowed_averages(traj, window)?;
    let (crossings, thickness_k) = match level {
        Some(level) => {
            let spec = EventSpec::only(&[EventKind::VirialCrossing]).with_level(level);
            let evs = detect_events(traj, &spec)?;
            let n = transverse(&evs, EventKind::VirialCrossing)
                .filter(|e| e.t >= window.lo && e.t <= window.hi)
                .count();
            let k = thickness(traj, level, Some(window)).ok().map(|t| t.k);
            (n, k)
        }
        None => (0, None),
    };
    let growth = pollard_classify(traj, &PollardOptions::default()).ok();
    let escape = if growth.map_or(false, |g| matches!(g.class, GrowthClass::Quadratic { .. })) {
        hyperbolic_virial(traj, None, false, &EscapeCriteria::default()).ok()
    } else {
        None
    };
    Ok(VirialReport {
        window,
        avg_k: av.avg_k,
        avg_u: av.avg_u,
        residual: av.residual,
        crossings,
        thickness_k,
        growth,
        escape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_ruler_endpoints() {
        let l = EnergyLevel::new(0.5).unwrap();
        assert_eq!(k_ruler(1.0, l).unwrap(), 0.0);
        assert_eq!(k_ruler(0.5, l).unwrap(), 1.0);
        assert_eq!(k_ruler(f64::INFINITY, l).unwrap(), -1.0);
        assert!(k_ruler(1e12, l).unwrap() > -1.0);
        assert!(k_ruler(0.4, l).is_err());
    }

    #[test]
    fn annulus_examples() {
        let l = EnergyLevel::new(1.0).unwrap();
        assert_eq!(annulus_side(2.0, l, 0.0).unwrap(), AnnulusSide::Inside);
        assert_eq!(annulus_side(2.0, l, 0.7).unwrap(), AnnulusSide::Inside);
        assert_eq!(annulus_side(1.0 + 1e-3, l, 0.5).unwrap(), AnnulusSide::BoundarySide);
        assert_eq!(annulus_side(10.0, l, 0.5).unwrap(), AnnulusSide::CollisionSide);
        assert_eq!(annulus_side(4.0, l, 0.5).unwrap(), AnnulusSide::Inside);
        assert!(annulus_side(0.5, l, 0.5).is_err());
    }

    #[test]
    fn jacobi_split_pairs() {
        assert_eq!(JacobiSplit::new(0).unwrap().pair, (1, 2));
        assert_eq!(JacobiSplit::new(2).unwrap().pair, (0, 1));
        assert!(JacobiSplit::new(3).is_err());
    }
}
