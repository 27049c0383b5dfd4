//! TOML scenario files: parsing, validation and resolution to a start state.

use serde::{Deserialize, Serialize};

use virlab_core::dynamics;
use virlab_core::families::{
    ensemble_state, euler_configuration, homographic_start, kepler_elements, lagrange_configuration, relative_equilibrium,
    CentralConfiguration,
};
use virlab_core::integrate::{collar_start, EventKind};
use virlab_core::{EnergyLevel, MassSystem, State};

use crate::error::CliError;

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

fn default_samples() -> usize {
    400
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Seed for ensemble samplers and randomized analyses.
    #[serde(default)]
    pub seed: Option<u64>,
    pub system: SystemSpec,
    pub initial: InitialSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub masses: Vec<f64>,
    #[serde(rename = "G", default = "one")]
    pub g: f64,
    #[serde(default = "two")]
    pub dim: usize,
    #[serde(default = "one")]
    pub alpha: f64,
}

impl SystemSpec {
    pub fn build(&self) -> Result<MassSystem, CliError> {
        MassSystem::with_params(self.masses.clone(), self.g, self.dim, self.alpha)
            .map_err(|e| CliError::Validation(format!("system: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    Explicit,
    Brake,
    Family,
    Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Lagrange,
    Euler,
    Homographic,
    Kepler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CcName {
    Lagrange,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    Turnaround,
    Collar,
}

/// Start state. Which optional fields apply depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    /// Energy level `E = -h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyName>,
    /// Body order along the line for Euler configurations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<[usize; 3]>,
    /// Central configuration of a homographic family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cc: Option<CcName>,
    /// Angular momentum as a fraction of the family maximum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_fraction: Option<f64>,
    /// Kepler eccentricity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<Sampler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    /// Collar width for the collar sampler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// Span in periods of the family member.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default)]
    pub events: Vec<EventKind>,
    /// Rows of the trajectory table.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub sundman: bool,
    #[serde(default)]
    pub strict_drift: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Analysis {
    Virial {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<String>,
    },
    Thickness {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<String>,
    },
    Growth {},
    JmLength {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nodes: Option<usize>,
    },
    Syzygy {},
    HillMesh {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolution: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        extent: Option<f64>,
    },
    Hyperbolic {
        #[serde(default)]
        two_sided: bool,
    },
}

impl Analysis {
    pub fn label(&self) -> &'static str {
        match self {
            Analysis::Virial { .. } => "virial",
            Analysis::Thickness { .. } => "thickness",
            Analysis::Growth {} => "growth",
            Analysis::JmLength { .. } => "jm-length",
            Analysis::Syzygy {} => "syzygy",
            Analysis::HillMesh { .. } => "hill-mesh",
            Analysis::Hyperbolic { .. } => "hyperbolic",
        }
    }

    fn window(&self) -> Option<&str> {
        match self {
            Analysis::Virial { window } | Analysis::Thickness { window } | Analysis::JmLength { window, .. } => {
                window.as_deref()
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            formats: default_formats(),
        }
    }
}

/// Time window: `full` or `lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowSpec {
    Full,
    Range(f64, f64),
}

pub fn parse_window(s: &str) -> Result<WindowSpec, String> {
    if s == "full" {
        return Ok(WindowSpec::Full);
    }
    let (a, b) = s.split_once(':').ok_or_else(|| format!("window `{s}`: expected `full` or `lo:hi`"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("window `{s}`: bad lower bound"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("window `{s}`: bad upper bound"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("window `{s}`: need finite lo < hi"));
    }
    Ok(WindowSpec::Range(lo, hi))
}

/// Parse scenario text; errors carry the TOML line and field.
pub fn parse(text: &str) -> Result<Scenario, CliError> {
    toml::from_str::<Scenario>(text).map_err(|e| CliError::Validation(format!("scenario: {e}")))
}

/// Scenario with defaults and overrides applied, ready to integrate.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: Scenario,
    pub sys: MassSystem,
    pub start: State,
    pub level: Option<EnergyLevel>,
    /// Natural period of a family member.
    pub period: Option<f64>,
    pub t_final: f64,
    pub tol: f64,
    pub seed: u64,
}

fn require<T: Clone>(x: &Option<T>, field: &str, kind: &str) -> Result<T, CliError> {
    x.clone()
        .ok_or_else(|| CliError::Validation(format!("initial.{field}: required for kind = \"{kind}\"")))
}

fn reject<T>(x: &Option<T>, field: &str, kind: &str) -> Result<(), CliError> {
    match x {
        Some(_) => Err(CliError::Validation(format!("initial.{field}: not used by kind = \"{kind}\""))),
        None => Ok(()),
    }
}

fn level_of(h: f64, field: &str) -> Result<EnergyLevel, CliError> {
    EnergyLevel::new(h).map_err(|e| CliError::Validation(format!("{field}: {e}")))
}

/// Two-body configuration used as the Kepler family's central configuration.
pub fn two_body_cc(sys: &MassSystem) -> Result<CentralConfiguration, CliError> {
    if sys.n_bodies() != 2 {
        return Err(CliError::Validation("kepler family needs two bodies".into()));
    }
    let mut q = vec![0.0; sys.config_len()];
    q[sys.dim()] = 1.0;
    Ok(CentralConfiguration::new(sys, &q)?)
}

/// Start state, level and period of a family member.
pub fn family_member(
    sys: &MassSystem,
    spec: &InitialSpec,
    level: EnergyLevel,
) -> Result<(State, CentralConfiguration, f64, f64), CliError> {
    let family = require(&spec.family, "family", "family")?;
    let cc_of = |name: CcName| -> Result<CentralConfiguration, CliError> {
        Ok(match name {
            CcName::Lagrange => lagrange_configuration(sys, level)?,
            CcName::Euler => euler_configuration(sys, spec.order.unwrap_or([0, 1, 2]), level)?,
        })
    };
    let (cc, frac) = match family {
        FamilyName::Lagrange | FamilyName::Euler => {
            reject(&spec.j_fraction, "j_fraction", "family")?;
            reject(&spec.e, "e", "family")?;
            let name = if family == FamilyName::Lagrange { CcName::Lagrange } else { CcName::Euler };
            (cc_of(name)?, 1.0)
        }
        FamilyName::Homographic => {
            reject(&spec.e, "e", "family")?;
            let f = require(&spec.j_fraction, "j_fraction", "family")?;
            (cc_of(spec.cc.unwrap_or(CcName::Lagrange))?, f)
        }
        FamilyName::Kepler => {
            reject(&spec.j_fraction, "j_fraction", "family")?;
            let e = require(&spec.e, "e", "family")?;
            if !(0.0..=1.0).contains(&e) {
                return Err(CliError::Validation(format!("initial.e: {e} outside [0, 1]")));
            }
            (two_body_cc(sys)?, (1.0 - e * e).sqrt())
        }
    };
    if !(0.0..=1.0).contains(&frac) {
        return Err(CliError::Validation(format!("initial.j_fraction: {frac} outside [0, 1]")));
    }
    let el = kepler_elements(sys, &cc, 0.0, level)?;
    let j = frac * el.j_max;
    let start = if frac == 1.0 && matches!(family, FamilyName::Lagrange | FamilyName::Euler) {
        relative_equilibrium(sys, &cc, level)?
    } else {
        homographic_start(sys, &cc, j, level)?
    };
    Ok((start, cc, j, el.period))
}

impl Scenario {
    /// Validate and build the start state; `seed` and `tol` override the file.
    pub fn resolve(mut self, seed: Option<u64>, tol: Option<f64>) -> Result<Resolved, CliError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(CliError::Validation(format!("name: `{}` is not a valid directory name", self.name)));
        }
        let sys = self.system.build()?;
        let seed = seed.or(self.seed).unwrap_or(0);
        let tol = tol.or(self.run.tol).unwrap_or(1e-12);
        if !(tol > 0.0 && tol < 1e-2) {
            return Err(CliError::Validation(format!("run.tol: {tol} outside (0, 1e-2)")));
        }
        self.seed = Some(seed);
        self.run.tol = Some(tol);
        let spec = &self.initial;
        let kind_name = serde_json::to_value(spec.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let k = kind_name.as_str();
        let mut period = None;
        let (start, level) = match spec.kind {
            InitialKind::Explicit => {
                let s = State::new(0.0, require(&spec.q, "q", k)?, require(&spec.v, "v", k)?);
                s.validate(&sys).map_err(|e| CliError::Validation(format!("initial: {e}")))?;
                reject(&spec.h, "h", k)?;
                let e = dynamics::energy(&sys, &s).map_err(|e| CliError::Validation(format!("initial: {e}")))?;
                (s, EnergyLevel::from_energy(e).ok())
            }
            InitialKind::Brake => {
                reject(&spec.v, "v", k)?;
                let q = require(&spec.q, "q", k)?;
                let q = match spec.h {
                    Some(h) => {
                        level_of(h, "initial.h")?;
                        dynamics::scaled_to_level(&sys, &q, h).map_err(|e| CliError::Validation(format!("initial.q: {e}")))?
                    }
                    None => q,
                };
                let s = State::at_rest(0.0, q);
                s.validate(&sys).map_err(|e| CliError::Validation(format!("initial.q: {e}")))?;
                let u = dynamics::potential_value(&sys, &s.q).map_err(|e| CliError::Validation(format!("initial.q: {e}")))?;
                (s, Some(level_of(u, "initial.q")?))
            }
            InitialKind::Family => {
                let level = level_of(require(&spec.h, "h", k)?, "initial.h")?;
                let (s, _, _, p) = family_member(&sys, spec, level)?;
                period = Some(p);
                (s, Some(level))
            }
            InitialKind::Ensemble => {
                let index = require(&spec.index, "index", k)?;
                let s = match require(&spec.sampler, "sampler", k)? {
                    Sampler::Turnaround => {
                        reject(&spec.eps, "eps", k)?;
                        ensemble_state(&sys, seed, index)?
                    }
                    Sampler::Collar => {
                        let level = level_of(require(&spec.h, "h", k)?, "initial.h")?;
                        collar_start(&sys, level, require(&spec.eps, "eps", k)?, seed, index)?
                    }
                };
                let e = dynamics::energy(&sys, &s)?;
                (s, EnergyLevel::from_energy(e).ok())
            }
        };
        if spec.kind != InitialKind::Family {
            for (x, f) in [
                (spec.family.is_some(), "family"),
                (spec.order.is_some(), "order"),
                (spec.cc.is_some(), "cc"),
                (spec.j_fraction.is_some(), "j_fraction"),
                (spec.e.is_some(), "e"),
            ] {
                if x {
                    return Err(CliError::Validation(format!("initial.{f}: not used by kind = \"{k}\"")));
                }
            }
        }
        let t_final = match (self.run.t_final, self.run.periods) {
            (Some(t), None) => t,
            (None, Some(n)) => match period {
                Some(p) => n * p,
                None => return Err(CliError::Validation("run.periods: only family starts have a period; use run.t_final".into())),
            },
            (Some(_), Some(_)) => return Err(CliError::Validation("run: give t_final or periods, not both".into())),
            (None, None) => return Err(CliError::Validation("run: one of t_final or periods is required".into())),
        };
        if !(t_final.is_finite() && t_final != 0.0) {
            return Err(CliError::Validation(format!("run: span {t_final} must be finite and nonzero")));
        }
        if self.run.samples < 2 {
            return Err(CliError::Validation("run.samples: need at least 2".into()));
        }
        let (lo, hi) = if t_final > 0.0 { (0.0, t_final) } else { (t_final, 0.0) };
        for (i, a) in self.analyses.iter().enumerate() {
            if let Some(w) = a.window() {
                match parse_window(w).map_err(|m| CliError::Validation(format!("analyses[{i}].window: {m}")))? {
                    WindowSpec::Range(a, b) if a < lo || b > hi => {
                        return Err(CliError::Validation(format!(
                            "analyses[{i}].window: [{a}, {b}] outside the run span [{lo}, {hi}]"
                        )))
                    }
                    _ => {}
                }
            }
            let needs_level = matches!(a, Analysis::Thickness { .. } | Analysis::JmLength { .. } | Analysis::HillMesh { .. });
            if needs_level && level.is_none() {
                return Err(CliError::Validation(format!(
                    "analyses[{i}]: {} needs negative energy",
                    a.label()
                )));
            }
            if matches!(a, Analysis::Syzygy {} | Analysis::HillMesh { .. }) && (sys.n_bodies() != 3 || sys.dim() != 2) {
                return Err(CliError::Validation(format!("analyses[{i}]: {} needs three bodies in the plane", a.label())));
            }
        }
        Ok(Resolved {
            scenario: self,
            sys,
            start,
            level,
            period,
            t_final,
            tol,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAGRANGE: &str = r#"
name = "lagrange"
[system]
masses = [1.0, 1.0, 1.0]
[initial]
kind = "family"
family = "lagrange"
h = 1.0
[run]
periods = 2
"#;

    #[test]
    fn parses_and_resolves() {
        let r = parse(LAGRANGE).unwrap().resolve(Some(3), None).unwrap();
        assert_eq!(r.seed, 3);
        assert_eq!(r.tol, 1e-12);
        assert_eq!(r.scenario.run.samples, 400);
        assert!((r.t_final - 2.0 * r.period.unwrap()).abs() < 1e-12);
        let e = dynamics::energy(&r.sys, &r.start).unwrap();
        assert!((e + 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_field_names_the_field_and_line() {
        let bad = LAGRANGE.replace("h = 1.0", "h = 1.0\nspin = 2");
        let CliError::Validation(msg) = parse(&bad).unwrap_err() else { panic!() };
        assert!(msg.contains("spin"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn kind_specific_fields_are_checked() {
        let bad = LAGRANGE.replace("family = \"lagrange\"", "family = \"homographic\"");
        let err = parse(&bad).unwrap().resolve(None, None).unwrap_err();
        assert!(err.to_string().contains("initial.j_fraction"), "{err}");
        let bad = LAGRANGE.replace("kind = \"family\"", "kind = \"brake\"");
        let err = parse(&bad).unwrap().resolve(None, None).unwrap_err();
        assert!(err.to_string().contains("initial.q"), "{err}");
    }

    #[test]
    fn windows() {
        assert_eq!(parse_window("full").unwrap(), WindowSpec::Full);
        assert_eq!(parse_window("1:2.5").unwrap(), WindowSpec::Range(1.0, 2.5));
        assert!(parse_window("2:1").is_err());
        assert!(parse_window("x").is_err());
        let bad = LAGRANGE.to_string() + "[[analyses]]\nkind = \"virial\"\nwindow = \"0:1e9\"\n";
        assert!(parse(&bad).unwrap().resolve(None, None).is_err());
    }

    #[test]
    fn kepler_member_has_requested_eccentricity() {
        let sys = MassSystem::new(vec![1.0, 3.0], 2).unwrap();
        let level = EnergyLevel::new(0.7).unwrap();
        let spec = InitialSpec {
            kind: InitialKind::Family,
            family: Some(FamilyName::Kepler),
            e: Some(0.5),
            h: Some(0.7),
            ..parse(LAGRANGE).unwrap().initial
        };
        let spec = InitialSpec { order: None, ..spec };
        let (s, cc, j, _) = family_member(&sys, &spec, level).unwrap();
        let el = kepler_elements(&sys, &cc, j, level).unwrap();
        assert!((el.eccentricity - 0.5).abs() < 1e-12);
        assert!((dynamics::energy(&sys, &s).unwrap() + 0.7).abs() < 1e-12);
    }
}
