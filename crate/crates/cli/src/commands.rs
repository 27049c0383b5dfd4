//! Subcommand implementations: each wraps one library operation with file I/O.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use virlab_core::brake::{periodic_brake_shoot, CatalogEntry, ShootOptions};
use virlab_core::dynamics::{self, kinetic, moment_of_inertia_cm, potential_value};
use virlab_core::families::{
    birkhoff_moeckel_ensemble, ensemble_state, escape_scan, homographic_orbit, EnergyNormalization,
};
use virlab_core::integrate::{
    collar_scan, propagate, CollarOptions, EventSpec, PropagateOptions, RunStats, Termination, Trajectory,
};
use virlab_core::jmgeom::{geodesic_to_brake, jm_length, sampled_path, GeodesicOptions};
use virlab_core::numeric::linear_fit;
use virlab_core::shape::{hill_mesh, shape_project, syzygy_sequence, HillMesh, SyzygyOptions};
use virlab_core::virial::{hyperbolic_virial, k_ruler, pollard_classify, thickness, virial_report, EscapeCriteria, PollardOptions, Window};
use virlab_core::{EnergyLevel, Execution, MassSystem, State};

use crate::error::{outcome, CliError};
use crate::output::{fmt_f64, parse_csv, Bundle, Plot, Provenance, Table};
use crate::scenario::{self, family_member, Analysis, FamilyName, Format, InitialKind, InitialSpec, Resolved, SystemSpec, WindowSpec};

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: PathBuf,
    pub exec: Execution,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn tol(&self) -> Result<f64, CliError> {
        let tol = self.tol.unwrap_or(1e-12);
        if !(tol > 0.0 && tol < 1e-2) {
            return Err(CliError::Validation(format!("--tol: {tol} outside (0, 1e-2)")));
        }
        Ok(tol)
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn level(h: f64, flag: &str) -> Result<EnergyLevel, CliError> {
    EnergyLevel::new(h).map_err(|e| invalid(format!("{flag}: {e}")))
}

fn system(masses: &[f64], dim: usize) -> Result<MassSystem, CliError> {
    MassSystem::new(masses.to_vec(), dim).map_err(|e| invalid(format!("--masses: {e}")))
}

/// JSON value of a library result, or `{"error": ..}` for a numerical outcome.
fn record<T: Serialize>(r: virlab_core::Result<T>) -> Value {
    match r {
        Ok(x) => serde_json::to_value(x).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn window_of(spec: Option<&str>, traj: &Trajectory) -> Result<Window, CliError> {
    match scenario::parse_window(spec.unwrap_or("full")).map_err(invalid)? {
        WindowSpec::Full => Ok(Window::full(traj)),
        WindowSpec::Range(lo, hi) => Ok(Window::new(lo, hi)),
    }
}

// ---------------------------------------------------------------- trajectories

/// Uniformly resampled trajectory table with energies and the k-ruler.
pub fn trajectory_table(traj: &Trajectory, level: Option<EnergyLevel>, n: usize) -> Result<Table, CliError> {
    let sys = traj.sys();
    let (nb, d) = (sys.n_bodies(), sys.dim());
    let mut cols = vec!["t".to_string()];
    for p in ["q", "v"] {
        for a in 0..nb {
            for k in 0..d {
                cols.push(format!("{p}{a}_{k}"));
            }
        }
    }
    cols.extend(["U", "K", "E", "I"].map(String::from));
    if level.is_some() {
        cols.push("k_ruler".into());
    }
    let mut table = Table::new(cols);
    let (lo, hi) = traj.span();
    for i in 0..n {
        let t = if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
        let s = traj.state_at(t)?;
        let u = potential_value(sys, &s.q)?;
        let k = kinetic(sys, &s.v);
        let mut row = vec![t];
        row.extend(&s.q);
        row.extend(&s.v);
        row.extend([u, k, k - u, moment_of_inertia_cm(sys, &s.q)]);
        if let Some(l) = level {
            row.push(k_ruler(u, l).unwrap_or(f64::NAN));
        }
        table.push(row);
    }
    Ok(table)
}

fn system_line(sys: &MassSystem) -> String {
    format!("# system: {}\n", serde_json::to_string(sys).unwrap_or_default())
}

fn write_trajectory(bundle: &mut Bundle, name: &str, prov: &Provenance, traj: &Trajectory, table: &Table) -> Result<PathBuf, CliError> {
    bundle.write(name, &format!("{}{}{}", prov.header("#"), system_line(traj.sys()), table.to_csv()))
}

/// Rebuild a trajectory from a CSV written by `run`, `simulate` or `family`.
pub fn load_trajectory(path: &Path, tol: f64) -> Result<Trajectory, CliError> {
    let text = read(path)?;
    let (header, table) = parse_csv(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let sys_json = header
        .iter()
        .find_map(|h| h.strip_prefix("system:"))
        .ok_or_else(|| invalid(format!("{}: missing `# system:` header line", path.display())))?;
    let sys: MassSystem =
        serde_json::from_str(sys_json.trim()).map_err(|e| invalid(format!("{}: system header: {e}", path.display())))?;
    let n = sys.config_len();
    let col = |p: &str, i: usize| format!("{p}{}_{}", i / sys.dim(), i % sys.dim());
    let idx = |name: &str| {
        table
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| invalid(format!("{}: missing column `{name}`", path.display())))
    };
    let it = idx("t")?;
    let iq: Vec<usize> = (0..n).map(|i| idx(&col("q", i))).collect::<Result<_, _>>()?;
    let iv: Vec<usize> = (0..n).map(|i| idx(&col("v", i))).collect::<Result<_, _>>()?;
    let states: Vec<State> = table
        .rows
        .iter()
        .map(|r| State::new(r[it], iq.iter().map(|&i| r[i]).collect(), iv.iter().map(|&i| r[i]).collect()))
        .collect();
    if states.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(invalid(format!("{}: times must increase strictly", path.display())));
    }
    Ok(Trajectory::from_samples(&sys, &states, tol)?)
}

fn energy_plot<'a>(table: &Table, level: Option<EnergyLevel>) -> Plot<'a> {
    let t = table.column("t").unwrap_or_default();
    let u = table.column("U").unwrap_or_default();
    let k = table.column("K").unwrap_or_default();
    let (su, sk, names) = match level {
        Some(l) => (1.0 / l.virial_value(), 1.0 / l.h(), ("U / 2h", "K / h")),
        None => (1.0, 1.0, ("U", "K")),
    };
    Plot {
        title: "Potential and kinetic energy",
        x_label: "t",
        y_label: if level.is_some() { "scaled energy" } else { "energy" },
        series: vec![
            (names.0, t.iter().zip(&u).map(|(a, b)| (*a, su * b)).collect()),
            (names.1, t.iter().zip(&k).map(|(a, b)| (*a, sk * b)).collect()),
        ],
        scatter: false,
        log_x: false,
        log_y: false,
    }
}

fn orbit_plot<'a>(table: &Table, sys: &MassSystem, names: &'a [String]) -> Option<Plot<'a>> {
    if sys.dim() != 2 {
        return None;
    }
    let series = (0..sys.n_bodies())
        .map(|a| {
            let x = table.column(&format!("q{a}_0")).unwrap_or_default();
            let y = table.column(&format!("q{a}_1")).unwrap_or_default();
            (names[a].as_str(), x.into_iter().zip(y).collect())
        })
        .collect();
    Some(Plot {
        title: "Orbit",
        x_label: "x",
        y_label: "y",
        series,
        scatter: false,
        log_x: false,
        log_y: false,
    })
}

fn body_names(sys: &MassSystem) -> Vec<String> {
    (0..sys.n_bodies()).map(|a| format!("body {a}")).collect()
}

// ---------------------------------------------------------------- run / simulate

#[derive(Debug, Serialize)]
struct EventRow {
    kind: virlab_core::integrate::EventKind,
    t: f64,
    direction: i8,
    degenerate: bool,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    termination: Termination,
    span: (f64, f64),
    e0: f64,
    stats: RunStats,
}

#[derive(Debug, Serialize)]
struct RunReport {
    name: String,
    start: State,
    h: Option<f64>,
    period: Option<f64>,
    t_final: f64,
    run: Option<RunSummary>,
    error: Option<String>,
    events: Vec<EventRow>,
    analyses: Vec<Value>,
}

fn propagate_options(r: &Resolved) -> PropagateOptions {
    let run = &r.scenario.run;
    let defaults = PropagateOptions::default();
    PropagateOptions {
        tol: r.tol,
        max_steps: run.max_steps.unwrap_or(defaults.max_steps),
        sundman: run.sundman,
        events: EventSpec {
            kinds: run.events.clone(),
            level: r.level,
            ..Default::default()
        },
        strict_drift: run.strict_drift,
        ..defaults
    }
}

/// Integrate a scenario and write its bundle; analyses only for `run`.
pub fn run_scenario(ctx: &Ctx, path: &Path, with_analyses: bool, out_given: bool) -> Result<Bundle, CliError> {
    let r = scenario::parse(&read(path)?)?.resolve(ctx.seed, ctx.tol)?;
    let base = match (&r.scenario.output.dir, out_given) {
        (Some(d), false) => PathBuf::from(d),
        _ => ctx.out.clone(),
    };
    let mut bundle = Bundle::create(&base.join(&r.scenario.name))?;
    let command = if with_analyses { "run" } else { "simulate" };
    let prov = Provenance::new(command, &r.scenario, r.seed, r.tol)?;
    let formats = &r.scenario.output.formats;
    log::info!("integrating {} to t = {}", r.scenario.name, r.t_final);
    let traj = outcome(propagate(&r.start, &r.sys, r.t_final, &propagate_options(&r)))?;
    let mut report = RunReport {
        name: r.scenario.name.clone(),
        start: r.start.clone(),
        h: r.level.map(|l| l.h()),
        period: r.period,
        t_final: r.t_final,
        run: None,
        error: None,
        events: Vec::new(),
        analyses: Vec::new(),
    };
    match &traj {
        Err(e) => report.error = Some(e.clone()),
        Ok(traj) => {
            report.run = Some(RunSummary {
                termination: traj.termination,
                span: traj.span(),
                e0: traj.e0,
                stats: traj.stats,
            });
            report.events = traj
                .events
                .iter()
                .map(|e| EventRow {
                    kind: e.kind,
                    t: e.t,
                    direction: e.direction,
                    degenerate: e.degenerate,
                })
                .collect();
            let table = trajectory_table(traj, r.level, r.scenario.run.samples)?;
            if formats.contains(&Format::Csv) {
                write_trajectory(&mut bundle, "trajectory.csv", &prov, traj, &table)?;
            }
            if formats.contains(&Format::Svg) {
                bundle.write("energy.svg", &energy_plot(&table, r.level).to_svg(&prov))?;
                let names = body_names(&r.sys);
                if let Some(p) = orbit_plot(&table, &r.sys, &names) {
                    bundle.write("orbit.svg", &p.to_svg(&prov))?;
                }
            }
            if with_analyses {
                for a in &r.scenario.analyses {
                    let v = analyze(ctx, a, traj, &r, &mut bundle, &prov)?;
                    report.analyses.push(json!({ "kind": a.label(), "result": v }));
                }
            }
        }
    }
    if formats.contains(&Format::Json) {
        bundle.write_json("report.json", &prov, &report)?;
    }
    Ok(bundle)
}

fn analyze(ctx: &Ctx, a: &Analysis, traj: &Trajectory, r: &Resolved, bundle: &mut Bundle, prov: &Provenance) -> Result<Value, CliError> {
    let need_level = || r.level.ok_or_else(|| invalid(format!("{} needs negative energy", a.label())));
    Ok(match a {
        Analysis::Virial { window } => record(virial_report(traj, r.level, window_of(window.as_deref(), traj)?)),
        Analysis::Thickness { window } => record(thickness(traj, need_level()?, Some(window_of(window.as_deref(), traj)?))),
        Analysis::Growth {} => record(pollard_classify(traj, &PollardOptions::default())),
        Analysis::JmLength { window, nodes } => {
            let w = window_of(window.as_deref(), traj)?;
            let level = need_level()?;
            let sys = traj.sys();
            let res = sampled_path(traj, level, w.lo, w.hi, nodes.unwrap_or(4000)).and_then(|path| {
                let action = traj.integrate(w.lo, w.hi, |s| Ok(2.0 * kinetic(sys, &s.v)))?;
                let l = jm_length(&path);
                Ok(json!({
                    "window": w,
                    "jm_length": l,
                    "kinetic_action": action,
                    "relative_difference": (l - action).abs() / action,
                }))
            });
            record(res)
        }
        Analysis::Syzygy {} => record(syzygy_sequence(traj, &SyzygyOptions::default()).map(|w| {
            json!({ "word": w.word(), "sequence": w })
        })),
        Analysis::HillMesh { resolution, extent } => {
            let res = hill_mesh(&r.sys, need_level()?, resolution.unwrap_or(48), extent.unwrap_or(1.5), ctx.exec);
            match res {
                Ok(m) => {
                    let b = write_mesh(bundle, "hill-boundary", prov, &m.boundary)?;
                    let v = write_mesh(bundle, "virial-surface", prov, &m.virial)?;
                    json!({ "h": m.h, "boundary": b, "virial": v })
                }
                Err(e) => match outcome::<()>(Err(e))? {
                    Err(m) => json!({ "error": m }),
                    Ok(()) => Value::Null,
                },
            }
        }
        Analysis::Hyperbolic { two_sided } => record(hyperbolic_virial(traj, None, *two_sided, &EscapeCriteria::default())),
    })
}

fn write_mesh(bundle: &mut Bundle, stem: &str, prov: &Provenance, m: &HillMesh) -> Result<Value, CliError> {
    bundle.write(&format!("{stem}.obj"), &format!("{}{}", prov.header("#"), m.to_obj()))?;
    bundle.write(&format!("{stem}.csv"), &format!("{}{}", prov.header("#"), m.to_csv()))?;
    Ok(json!({
        "level": m.level,
        "half_width": m.half_width,
        "resolution": m.resolution,
        "vertices": m.vertices.len(),
        "faces": m.faces.len(),
        "area": m.area(),
    }))
}

// ---------------------------------------------------------------- brake-search

#[derive(Debug, Clone, Serialize)]
pub struct BrakeSearchArgs {
    pub masses: Vec<f64>,
    pub dim: usize,
    pub q: Vec<f64>,
    pub h: f64,
    pub t_max: f64,
    pub max_evals: usize,
    pub residual_tol: f64,
}

pub fn brake_search(ctx: &Ctx, args: &BrakeSearchArgs) -> Result<Bundle, CliError> {
    let sys = system(&args.masses, args.dim)?;
    let lvl = level(args.h, "--h")?;
    let tol = ctx.tol()?;
    let seed_q = dynamics::scaled_to_level(&sys, &args.q, args.h).map_err(|e| invalid(format!("--q: {e}")))?;
    let prov = Provenance::new("brake-search", args, ctx.seed(), tol)?;
    let mut bundle = Bundle::create(&ctx.out.join("brake-search"))?;
    let opts = ShootOptions {
        t_max: args.t_max,
        max_evals: args.max_evals,
        residual_tol: args.residual_tol,
        tol,
        ..Default::default()
    };
    let cand = outcome(periodic_brake_shoot(&seed_q, &sys, lvl, &opts))?;
    let mut catalog = None;
    if let Ok(c) = &cand {
        if c.converged {
            let popts = PropagateOptions {
                strict_drift: false,
                ..PropagateOptions::with_tol(tol).no_events()
            };
            if let Ok(traj) = propagate(&State::at_rest(0.0, c.q_star.clone()), &sys, c.period, &popts) {
                let table = trajectory_table(&traj, Some(lvl), 400)?;
                write_trajectory(&mut bundle, "orbit.csv", &prov, &traj, &table)?;
                let names = body_names(&sys);
                if let Some(p) = orbit_plot(&table, &sys, &names) {
                    bundle.write("orbit.svg", &p.to_svg(&prov))?;
                }
                catalog = Some(CatalogEntry {
                    masses: args.masses.clone(),
                    q_star: c.q_star.clone(),
                    period: c.period,
                    residual: c.residual,
                    avg_u_ratio: c.avg_u_ratio,
                    crossings: c.crossings,
                    closest_approach: traj.stats.closest.r,
                });
            }
        }
    }
    let body = match cand {
        Ok(c) => json!({ "candidate": c, "catalog": catalog }),
        Err(e) => json!({ "error": e }),
    };
    bundle.write_json("brake.json", &prov, &body)?;
    Ok(bundle)
}

// ---------------------------------------------------------------- virial-report

#[derive(Debug, Clone, Serialize)]
pub struct VirialArgs {
    pub traj: PathBuf,
    pub window: String,
    pub h: Option<f64>,
}

pub fn virial_report_cmd(ctx: &Ctx, args: &VirialArgs) -> Result<(Bundle, String), CliError> {
    let tol = ctx.tol()?;
    let traj = load_trajectory(&args.traj, tol)?;
    let w = window_of(Some(&args.window), &traj)?;
    let lvl = match args.h {
        Some(h) => Some(level(h, "--h")?),
        None => EnergyLevel::from_energy(traj.e0).ok(),
    };
    let report = outcome(virial_report(&traj, lvl, w))?;
    let body = match report {
        Ok(r) => serde_json::to_value(r).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e }),
    };
    let inputs = json!({
        "traj": args.traj.file_name().map(|f| f.to_string_lossy().into_owned()),
        "window": args.window,
        "h": args.h,
        "samples": traj.samples().len(),
    });
    let prov = Provenance::new("virial-report", &inputs, ctx.seed(), tol)?;
    let mut bundle = Bundle::create(&ctx.out.join("virial-report"))?;
    let path = bundle.write_json("virial-report.json", &prov, &body)?;
    Ok((bundle, read(&path)?))
}

// ---------------------------------------------------------------- jm-minimize

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointFile {
    pub system: SystemSpec,
    pub h: f64,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct JmArgs {
    pub point: PathBuf,
    pub segments: usize,
    pub restarts: usize,
    pub polish: bool,
}

pub fn jm_minimize(ctx: &Ctx, args: &JmArgs) -> Result<(Bundle, Value), CliError> {
    let tol = ctx.tol()?;
    let text = read(&args.point)?;
    let point: PointFile = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", args.point.display())))?;
    let sys = point.system.build()?;
    let lvl = level(point.h, "h")?;
    let opts = GeodesicOptions {
        segments: args.segments,
        restarts: args.restarts,
        polish: args.polish,
        seed: ctx.seed(),
        tol,
        ..Default::default()
    };
    let inputs = json!({ "point": point, "segments": args.segments, "restarts": args.restarts, "polish": args.polish });
    let prov = Provenance::new("jm-minimize", &inputs, ctx.seed(), tol)?;
    let mut bundle = Bundle::create(&ctx.out.join("jm-minimize"))?;
    let res = outcome(geodesic_to_brake(&point.q, lvl, &sys, &opts, ctx.exec))?;
    let summary = match &res {
        Ok(g) => {
            let mut table = Table::new(
                std::iter::once("node".to_string())
                    .chain((0..sys.config_len()).map(|i| format!("q{}_{}", i / sys.dim(), i % sys.dim())))
                    .chain(["U".to_string()])
                    .collect(),
            );
            for (i, q) in g.path.nodes.iter().enumerate() {
                let mut row = vec![i as f64];
                row.extend(q);
                row.push(potential_value(&sys, q).unwrap_or(f64::INFINITY));
                table.push(row);
            }
            bundle.write_csv("path.csv", &prov, &table)?;
            bundle.write_json("geodesic.json", &prov, g)?;
            json!({
                "converged": g.converged,
                "collision_free": g.collision_free,
                "length": g.length,
                "verification_distance": g.verification.distance,
                "brake_point": g.brake_point,
            })
        }
        Err(e) => {
            bundle.write_json("geodesic.json", &prov, &json!({ "error": e }))?;
            json!({ "error": e })
        }
    };
    Ok((bundle, summary))
}

// ---------------------------------------------------------------- family

#[derive(Debug, Clone, Serialize)]
pub struct FamilyArgs {
    pub family: FamilyName,
    pub masses: Option<Vec<f64>>,
    pub dim: usize,
    pub h: f64,
    pub order: Option<[usize; 3]>,
    pub cc: Option<scenario::CcName>,
    pub j_fraction: Option<f64>,
    pub e: Option<f64>,
    pub samples: usize,
}

pub fn family(ctx: &Ctx, args: &FamilyArgs) -> Result<(Bundle, Value), CliError> {
    let tol = ctx.tol()?;
    let default_n = if args.family == FamilyName::Kepler { 2 } else { 3 };
    let masses = args.masses.clone().unwrap_or_else(|| vec![1.0; default_n]);
    let sys = system(&masses, args.dim)?;
    let lvl = level(args.h, "--h")?;
    let spec = InitialSpec {
        kind: InitialKind::Family,
        q: None,
        v: None,
        h: Some(args.h),
        family: Some(args.family),
        order: args.order,
        cc: args.cc,
        j_fraction: args.j_fraction,
        e: args.e,
        sampler: None,
        index: None,
        eps: None,
    };
    let (_, cc, j, _) = family_member(&sys, &spec, lvl)?;
    let prov = Provenance::new("family", args, ctx.seed(), tol)?;
    let mut bundle = Bundle::create(&ctx.out.join("family"))?;
    let res = outcome(homographic_orbit(&sys, &cc, j, lvl, tol))?;
    let body = match res {
        Ok((orbit, traj)) => {
            let table = trajectory_table(&traj, Some(lvl), args.samples)?;
            write_trajectory(&mut bundle, "trajectory.csv", &prov, &traj, &table)?;
            let virial = record(virial_report(&traj, Some(lvl), Window::full(&traj)));
            json!({ "orbit": orbit, "termination": traj.termination, "virial": virial })
        }
        Err(e) => json!({ "error": e }),
    };
    bundle.write_json("family.json", &prov, &body)?;
    Ok((bundle, body))
}

// ---------------------------------------------------------------- escape-scan

#[derive(Debug, Clone, Serialize)]
pub struct EscapeArgs {
    pub masses: Vec<f64>,
    pub dim: usize,
    pub normalization: EnergyNormalization,
    pub n: usize,
    pub max_draws: usize,
    pub scan: usize,
    pub horizon: f64,
}

pub fn escape_scan_cmd(ctx: &Ctx, args: &EscapeArgs) -> Result<(Bundle, String), CliError> {
    let tol = ctx.tol()?;
    let sys = system(&args.masses, args.dim)?;
    let seed = ctx.seed();
    let prov = Provenance::new("escape-scan", args, seed, tol)?;
    let mut bundle = Bundle::create(&ctx.out.join("escape-scan"))?;
    let ens = birkhoff_moeckel_ensemble(&sys, args.normalization, args.n, args.max_draws, seed, ctx.exec)?;
    let mut table = Table::new(
        ["draw", "i0", "threshold", "h", "i_ddot", "conclusion"]
            .map(String::from)
            .to_vec(),
    );
    for (i, c) in &ens.passing {
        table.push(vec![*i as f64, c.i0, c.threshold, c.h, c.i_ddot, if c.conclusion { 1.0 } else { 0.0 }]);
    }
    bundle.write_csv("turnarounds.csv", &prov, &table)?;
    let line = format!(
        "{}: {} violations among {} passing states ({} drawn)",
        args.normalization.label(),
        ens.violations.len(),
        ens.passing.len(),
        ens.drawn
    );
    let violating: Vec<Value> = ens
        .violations
        .iter()
        .map(|&k| json!({ "draw": ens.passing[k].0, "check": ens.passing[k].1 }))
        .collect();
    let mut body = json!({
        "normalization": args.normalization,
        "label": args.normalization.label(),
        "drawn": ens.drawn,
        "passing": ens.passing.len(),
        "violations": ens.violations.len(),
        "violating": violating,
    });
    if args.scan > 0 {
        let states: Vec<_> = ens
            .passing
            .iter()
            .take(args.scan)
            .map(|(i, c)| ensemble_state(&sys, seed, *i).map(|s| (*i, s, *c)))
            .collect::<Result<_, _>>()?;
        let scan = escape_scan(&sys, &states, args.horizon, tol, ctx.exec);
        bundle.write("escape.jsonl", &crate::output::json_lines(&scan.rows)?)?;
        body["escape"] = json!({ "monotone_fraction": scan.monotone_fraction, "horizon": scan.horizon, "rows": scan.rows.len() });
    }
    bundle.write_json("birkhoff-moeckel.json", &prov, &body)?;
    Ok((bundle, line))
}

// ---------------------------------------------------------------- shape-export

#[derive(Debug, Clone, Serialize)]
pub struct ShapeArgs {
    pub masses: Vec<f64>,
    pub h: f64,
    pub resolution: usize,
    pub extent: f64,
    pub traj: Option<PathBuf>,
}

pub fn shape_export(ctx: &Ctx, args: &ShapeArgs) -> Result<Bundle, CliError> {
    let tol = ctx.tol()?;
    let sys = system(&args.masses, 2)?;
    let lvl = level(args.h, "--h")?;
    let inputs = json!({
        "masses": args.masses,
        "h": args.h,
        "resolution": args.resolution,
        "extent": args.extent,
        "traj": args.traj.as_ref().and_then(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()),
    });
    let prov = Provenance::new("shape-export", &inputs, ctx.seed(), tol)?;
    let mut bundle = Bundle::create(&ctx.out.join("shape-export"))?;
    let meshes = hill_mesh(&sys, lvl, args.resolution, args.extent, ctx.exec)?;
    let b = write_mesh(&mut bundle, "hill-boundary", &prov, &meshes.boundary)?;
    let v = write_mesh(&mut bundle, "virial-surface", &prov, &meshes.virial)?;
    let mut body = json!({ "h": args.h, "boundary": b, "virial": v });
    if let Some(path) = &args.traj {
        let traj = load_trajectory(path, tol)?;
        let mut curve = Table::new(["t", "x", "y", "z", "latitude"].map(String::from).to_vec());
        for s in traj.samples() {
            let p = shape_project(traj.sys(), &s.q)?;
            let x = p.size_coords();
            curve.push(vec![s.t, x[0], x[1], x[2], p.latitude()]);
        }
        bundle.write_csv("shape-curve.csv", &prov, &curve)?;
        let word = outcome(syzygy_sequence(&traj, &SyzygyOptions::default()))?;
        let sy = match word {
            Ok(w) => json!({ "word": w.word(), "sequence": w }),
            Err(e) => json!({ "error": e }),
        };
        bundle.write_json("syzygy.json", &prov, &sy)?;
        body["syzygy"] = sy;
    }
    bundle.write_json("shape.json", &prov, &body)?;
    Ok(bundle)
}

// ---------------------------------------------------------------- collar-test

#[derive(Debug, Clone, Serialize)]
pub struct CollarArgs {
    pub eps: Vec<f64>,
    pub ensemble: usize,
    pub masses: Vec<f64>,
    pub h: f64,
    pub multiplier: f64,
    pub max_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CollarSummary {
    pub rows: Vec<virlab_core::integrate::CollarRow>,
    /// Fitted exponent of median exit time against `eps`.
    pub exponent: f64,
    pub all_exited: bool,
}

pub fn collar_test(ctx: &Ctx, args: &CollarArgs) -> Result<(Bundle, String), CliError> {
    let tol = ctx.tol()?;
    if args.eps.is_empty() {
        return Err(invalid("--eps: give at least one width"));
    }
    if args.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(invalid("--eps: widths must be positive"));
    }
    if args.ensemble == 0 {
        return Err(invalid("--ensemble: need at least one member"));
    }
    let sys = system(&args.masses, 2)?;
    let lvl = level(args.h, "--h")?;
    let opts = CollarOptions {
        multiplier: args.multiplier,
        max_time: args.max_time,
        tol,
    };
    let prov = Provenance::new("collar-test", args, ctx.seed(), tol)?;
    let mut bundle = Bundle::create(&ctx.out.join("collar-test"))?;
    let rows = collar_scan(&sys, lvl, &args.eps, args.ensemble, ctx.seed(), &opts, ctx.exec)?;
    let (eps0, t0) = (rows[0].eps, rows[0].median_exit);
    let mut table = Table::new(
        ["eps", "median_exit", "exited", "total", "min_abs_du_dt", "time_ratio", "sqrt_eps_ratio"]
            .map(String::from)
            .to_vec(),
    );
    let mut text = String::from("eps            median_exit    time_ratio     sqrt_eps_ratio exited\n");
    for r in &rows {
        let (tr, sr) = (r.median_exit / t0, (r.eps / eps0).sqrt());
        table.push(vec![r.eps, r.median_exit, r.exited as f64, r.total as f64, r.min_abs_du_dt, tr, sr]);
        text.push_str(&format!(
            "{:<14} {:<14} {:<14} {:<14} {}/{}\n",
            fmt_f64(r.eps),
            fmt_f64(r.median_exit),
            fmt_f64(tr),
            fmt_f64(sr),
            r.exited,
            r.total
        ));
    }
    let exponent = if rows.len() > 1 {
        let lx: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.median_exit.ln()).collect();
        linear_fit(&lx, &ly).1
    } else {
        f64::NAN
    };
    text.push_str(&format!("fitted exponent {}\n", fmt_f64(exponent)));
    let summary = CollarSummary {
        all_exited: rows.iter().all(|r| r.exited == r.total),
        rows,
        exponent,
    };
    bundle.write_csv("collar.csv", &prov, &table)?;
    bundle.write_json("collar.json", &prov, &summary)?;
    let pts: Vec<(f64, f64)> = summary.rows.iter().map(|r| (r.eps, r.median_exit)).collect();
    let plot = Plot {
        title: "Median collar exit time",
        x_label: "eps",
        y_label: "median exit time",
        series: vec![("measured", pts)],
        scatter: true,
        log_x: true,
        log_y: true,
    };
    bundle.write("collar.svg", &plot.to_svg(&prov))?;
    Ok((bundle, text))
}
