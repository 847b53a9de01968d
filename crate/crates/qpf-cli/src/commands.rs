use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use qpf::bifurcation::{
    classify_and_scale, critical_beta, induction_start_check, sink_source_search, survives, verify_induction,
    EscapeOptions, Mode, ScalingOptions,
};
use qpf::circle::{orbit_point, wrap};
use qpf::cocycle::{cocycle_lyapunov, lambda_c};
use qpf::graphs::{
    backward_orbit_lyapunov, converge_boundary, graph_lyapunov, iterate_boundary_on, iterate_on_grid, merge_grids,
    middle_graph, min_graph_distance, orbit_lyapunov, pullback_graph, uniform_grid, Boundary, GraphKind, GraphSample,
};
use qpf::peaks::{chain_in_graph, default_min_depth, detect_peaks, sharpening_rate, track_peaks, Peak};
use qpf::systems::ForcingFunction;
use qpf::timesets::TimeSetTable;
use qpf::QpfError;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Family, GraphKindName, PeakSource, Potential};
use crate::svg::{emit_svg, Panel, Series, Style, SvgError, ATTRACTOR, REPELLER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Graph,
    Lyapunov,
    Bifurcate,
    SinkSource,
    Induction,
    Timesets,
    Peaks,
    Harper,
    Cocycle,
    Scaling,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Graph => "graph",
            Command::Lyapunov => "lyapunov",
            Command::Bifurcate => "bifurcate",
            Command::SinkSource => "sink-source",
            Command::Induction => "induction",
            Command::Timesets => "timesets",
            Command::Peaks => "peaks",
            Command::Harper => "harper",
            Command::Cocycle => "cocycle",
            Command::Scaling => "scaling",
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    /// Bad input: exit status 2.
    Usage(String),
    /// The computation ran but reported a failure: exit status 1.
    Finding(String),
    Io(io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Usage(m) => write!(f, "usage error: {m}"),
            RunError::Finding(m) => write!(f, "{m}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.into())
    }
}

impl From<SvgError> for RunError {
    fn from(e: SvgError) -> Self {
        RunError::Usage(e.to_string())
    }
}

impl From<QpfError> for RunError {
    fn from(e: QpfError) -> Self {
        match e {
            QpfError::StrictRefused(_)
            | QpfError::InvalidArgument(_)
            | QpfError::EBelowThreshold { .. }
            | QpfError::NotMonotone
            | QpfError::GridMismatch => RunError::Usage(e.to_string()),
            _ => RunError::Finding(e.to_string()),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Finding(_) | RunError::Io(_) => 1,
            RunError::Usage(_) => 2,
        }
    }
}

/// What a finished command reports back.
#[derive(Debug)]
pub struct Outcome {
    /// Whether every checked statement held.
    pub ok: bool,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

/// Round-trip decimal representation.
fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema: String,
    command: &'a str,
    system: String,
    ok: bool,
    config: &'a ExperimentConfig,
    result: Value,
}

struct Sink<'a> {
    cfg: &'a ExperimentConfig,
    cmd: Command,
    stem: PathBuf,
    written: Vec<PathBuf>,
}

impl<'a> Sink<'a> {
    fn new(cfg: &'a ExperimentConfig, cmd: Command) -> Result<Self, RunError> {
        fs::create_dir_all(&cfg.output.dir)?;
        let name = cfg.output.name.clone().unwrap_or_else(|| cmd.name().to_string());
        Ok(Sink { cfg, cmd, stem: cfg.output.dir.join(name), written: vec![] })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        let mut s = self.stem.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    }

    fn csv(&mut self, suffix: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), RunError> {
        let path = self.path(suffix);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn json(&mut self, system: &str, ok: bool, result: Value) -> Result<(), RunError> {
        let path = self.path(".json");
        let env = Envelope {
            schema: format!("qpf-cli/{}/v1", self.cmd.name()),
            command: self.cmd.name(),
            system: system.into(),
            ok,
            config: self.cfg,
            result,
        };
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &env).map_err(io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn svg(&mut self, panels: &[Panel], style: &Style) -> Result<(), RunError> {
        if !self.cfg.run.svg {
            return Ok(());
        }
        let doc = emit_svg(panels, style)?;
        let path = self.path(".svg");
        fs::write(&path, doc)?;
        self.written.push(path);
        Ok(())
    }

    fn columnar(&mut self, suffix: &str, g: &GraphSample) -> Result<(), RunError> {
        if !self.cfg.output.binary {
            return Ok(());
        }
        let path = self.path(suffix);
        let mut w = BufWriter::new(File::create(&path)?);
        g.write_columnar(&mut w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn finish(self, ok: bool, summary: String) -> Outcome {
        Outcome { ok, artifacts: self.written, summary }
    }
}

fn to_json<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

fn points(g: &GraphSample) -> Vec<(f64, f64)> {
    g.grid.iter().copied().zip(g.values.iter().copied()).collect()
}

fn escape_options(cfg: &ExperimentConfig) -> EscapeOptions {
    EscapeOptions { n_max: cfg.bifurcate.n_max, grid: cfg.bifurcate.escape_grid }
}

fn require_beta(cfg: &ExperimentConfig) -> Result<(), RunError> {
    if cfg.has_beta() {
        Ok(())
    } else {
        Err(RunError::Usage(format!("system.family = {:?} has no forcing parameter to vary", cfg.system.family)))
    }
}

/// Runs one command and writes its artifacts.
pub fn execute(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let mut sink = Sink::new(cfg, cmd)?;
    let result = match cmd {
        Command::Graph => graph(cfg, &mut sink),
        Command::Lyapunov => lyapunov(cfg, &mut sink),
        Command::Bifurcate => bifurcate(cfg, &mut sink),
        Command::SinkSource => sink_source(cfg, &mut sink),
        Command::Induction => induction(cfg, &mut sink),
        Command::Timesets => timesets(cfg, &mut sink),
        Command::Peaks => peaks(cfg, &mut sink),
        Command::Harper => harper(cfg, &mut sink),
        Command::Cocycle => cocycle(cfg, &mut sink),
        Command::Scaling => scaling(cfg, &mut sink),
    };
    match result {
        Ok((ok, summary)) => Ok(sink.finish(ok, summary)),
        Err(RunError::Finding(msg)) => {
            // findings still leave a report behind
            let name = cfg.system().map(|s| s.name).unwrap_or_default();
            sink.json(&name, false, json!({ "error": msg }))?;
            Err(RunError::Finding(msg))
        }
        Err(e) => Err(e),
    }
}

type Step = Result<(bool, String), RunError>;

fn graph(cfg: &ExperimentConfig, sink: &mut Sink) -> Step {
    let sys = cfg.system().map_err(|e| RunError::Usage(e.to_string()))?;
    let grid = uniform_grid(cfg.run.grid);
    let n = cfg.run.iterates;
    let mut rows = vec![];
    let mut summaries = vec![];
    let mut series = vec![];
    let mut upper = None;
    let mut lower = None;
    for kind in &cfg.graph.kinds {
        let (label, color, sample) = match kind {
            GraphKindName::Upper => ("upper", ATTRACTOR, Some(iterate_boundary_on(&sys, Boundary::Upper, n, &grid))),
            GraphKindName::Lower => ("lower", ATTRACTOR, Some(iterate_boundary_on(&sys, Boundary::Lower, n, &grid))),
            GraphKindName::Middle => ("middle", REPELLER, Some(middle_graph(&sys, &grid, cfg.graph.middle_n_test)?)),
            GraphKindName::Repeller => ("repeller", REPELLER, Some(pullback_graph(&sys, cfg.graph.repeller_start, n, &grid)?)),
            GraphKindName::Orbit => ("orbit", ATTRACTOR, None),
        };
        match sample {
            Some(mut g) => {
                g.lyap = graph_lyapunov(&sys, &g, cfg.graph.lyap_tol).ok();
                rows.extend(g.grid.iter().zip(&g.values).map(|(t, v)| vec![label.into(), num(*t), num(*v)]));
                summaries.push(json!({
                    "series": label,
                    "points": g.grid.len(),
                    "iterates_used": g.iterates_used,
                    "residual": g.residual,
                    "lyap": g.lyap,
                    "resolution": g.resolution,
                }));
                sink.columnar(&format!(".{label}.bin"), &g)?;
                series.push(Series::new(label, color, points(&g)));
                match kind {
                    GraphKindName::Upper => upper = Some(g),
                    GraphKindName::Lower => lower = Some(g),
                    _ => {}
                }
            }
            None => {
                let pts = orbit_points(&sys, cfg.graph.orbit_points, cfg.graph.transient);
                rows.extend(pts.iter().map(|(t, v)| vec![label.into(), num(*t), num(*v)]));
                summaries.push(json!({ "series": label, "points": pts.len(), "transient": cfg.graph.transient }));
                series.push(Series::new(label, color, pts));
            }
        }
    }
    let distance = match (&upper, &lower) {
        (Some(a), Some(b)) => Some(min_graph_distance(a, b)?),
        _ => None,
    };
    sink.csv(".csv", &["series", "theta", "value"], rows)?;
    sink.json(&sys.name, true, json!({ "series": summaries, "min_upper_lower_distance": distance }))?;
    sink.svg(&[Panel { title: sys.name.clone(), series, y_range: None }], &Style { columns: 1, ..Style::default() })?;
    Ok((true, format!("{}: {} series on {} fibres", sys.name, cfg.graph.kinds.len(), grid.len())))
}

/// A single forward trajectory from the top of the driven space.
fn orbit_points(sys: &qpf::systems::QpfSystem, count: usize, transient: usize) -> Vec<(f64, f64)> {
    let (_, top) = sys.domain();
    let omega = sys.omega();
    let mut x = top;
    let mut out = Vec::with_capacity(count);
    for i in 0..transient + count {
        let t = wrap(orbit_point(omega, i as i64));
        if i >= transient {
            out.push((t, x));
        }
        x = sys.apply(t, x);
    }
    out
}

fn lyapunov(cfg: &ExperimentConfig, sink: &mut Sink) -> Step {
    let sys = cfg.system().map_err(|e| RunError::Usage(e.to_string()))?;
    let l = &cfg.lyapunov;
    let (lo, hi) = sys.domain();
    let forward = if l.forward_from.is_empty() { vec![hi, lo] } else { l.forward_from.clone() };
    let mut rows = vec![];
    let mut out = vec![];
    for &x0 in &forward {
        let v = orbit_lyapunov(&sys, l.theta0, x0, l.n, l.transient);
        rows.push(vec!["forward".into(), num(x0), num(v)]);
        out.push(json!({ "direction": "forward", "x0": x0, "exponent": v }));
    }
    for &x0 in &l.backward_from {
        let v = backward_orbit_lyapunov(&sys, l.theta0, x0, l.n, l.transient)?;
        rows.push(vec!["backward".into(), num(x0), num(v)]);
        out.push(json!({ "direction": "backward", "x0": x0, "exponent": v }));
    }
    sink.csv(".csv", &["direction", "x0", "exponent"], rows)?;
    sink.json(&sys.name, true, json!({ "theta0": l.theta0, "n": l.n, "transient": l.transient, "exponents": out }))?;
    Ok((true, format!("{}: {} exponents", sys.name, out.len())))
}

fn bifurcate(cfg: &ExperimentConfig, sink: &mut Sink) -> Step {
    require_beta(cfg)?;
    let b = &cfg.bifurcate;
    let opts = escape_options(cfg);
    let factory = |beta: f64| cfg.system_at(beta).expect("validated");
    let name = factory(b.lo).name;
    let bracket = critical_beta(factory, b.lo, b.hi, b.tol, &opts)?;
    if b.scan >= 2 {
        let rows: Vec<Vec<String>> = (0..b.scan)
            .map(|k| {
                let beta = b.lo + (b.hi - b.lo) * k as f64 / (b.scan - 1) as f64;
                vec![num(beta), survives(&factory(beta), &opts).to_string()]
            })
            .collect();
        sink.csv(".scan.csv", &["beta", "survives"], rows)?;
    }
    sink.csv(
        ".csv",
        &["beta_lo", "beta_hi", "width", "n_max", "grid"],
        vec![vec![num(bracket.lo), num(bracket.hi), num(bracket.width), bracket.n_max.to_string(), bracket.grid.to_string()]],
    )?;
    sink.json(&name, true, json!({ "bracket": bracket, "midpoint": bracket.mid() }))?;
    Ok((true, format!("{name}: beta_c in [{}, {}]", bracket.lo, bracket.hi)))
}

fn scaling(cfg: &ExperimentConfig, sink: &mut Sink) -> Step {
    require_beta(cfg)?;
    let s = &cfg.scaling;
    let factory = |beta: f64| cfg.system_at(beta).expect("validated");
    let name = factory(s.lo).name;
    let bracket = critical_beta(factory, s.lo, s.hi, s.tol, &escape_options(cfg))?;
    let opts = ScalingOptions {
        n_avg: s.n_avg,
        transient: s.transient,
        eps_cls: s.eps,
        offsets: s.offsets.clone(),
        grid: cfg.run.grid,
        orbit_points: s.orbit_points,
        graph_iterates: cfg.run.iterates,
    };
    let report = classify_and_scale(factory, &bracket, &opts)?;
    let rows = report
        .points
        .iter()
        .map(|p| vec![num(p.delta), num(p.beta), num(p.gap), num(p.argmin)])
        .collect();
    sink.csv(".csv", &["delta", "beta", "gap", "argmin"], rows)?;
    sink.json(&name, true, json!({ "bracket": bracket, "report": report }))?;
    Ok((
        true,
        format!("{name}: {:?} collision, gap exponent {:.4} (R^2 {:.6})", report.collision, report.exponent, report.r2),
    ))
}

fn build_table(cfg: &ExperimentConfig, window: i64) -> Result<TimeSetTable, RunError> {
    let prm = cfg.timeset_params().map_err(|e| RunError::Usage(e.to_string()))?;
    Ok(TimeSetTable::build(prm, window, window)?)
}

fn sink_source(cfg: &ExperimentConfig, sink: &mut Sink) -> Step {
    let sys = cfg.system().map_err(|e| RunError::Usage(e.to_string()))?;
    let s = &cfg.sink_source;
    let mut table = build_table(cfg, s.window)?;
    table.ensure_ls(s.p_max)?;
    let found = sink_source_search(&sys, &table, s.p_max, cfg.run.mode.into())?;
    let ok = found.iter().all(|c| c.forward_ok && c.backward_ok);
    let rows = found
        .iter()
        .map(|c| {
            vec![
                c.p.to_string(),
                c.l_minus.to_string(),
                c.l_plus.to_string(),
                num(c.beta),
                num(c.theta),
                num(c.x),
                num(c.min_forward),
                num(c.min_backward),
                c.forward_ok.to_string(),
                c.backward_ok.to_string(),
            ]
        })
        .collect();
    sink.csv(
        ".csv",
        &["p", "l_minus", "l_plus", "beta", "theta", "x", "min_forward", "min_backward", "forward_ok", "backward_ok"],
        rows,
    )?;
    let mut profile = vec![];
    for c in &found {
        for (k, &h) in c.profile.horizons.iter().enumerate() {
            let f = c.profile.forward.get(k).map(|&v| num(v)).unwrap_or_default();
            let b = c.profile.backward.get(k).map(|&v| num(v)).unwrap_or_default();
            profile.push(vec![c.p.to_string(), h.to_string(), f, b]);
        }
    }
    sink.csv(".profile.csv", &["p", "horizon", "forward", "backward"], profile)?;
    sink.json(&sys.name, ok, json!({ "candidates": found }))?;
    Ok((ok, format!("{}: {} candidates, all positive: {ok}", sys.name, found.len())))
}

fn induction(cfg: &ExperimentConfig, sink: &mut Sink) -> Step {
    let sys = cfg.system().map_err(|e| RunError::Usage(e.to_string()))?;
    let i = &cfg.induction;
    let mode: Mode = cfg.run.mode.into();
    let report = if i.q == 0 {
        induction_start_check(&sys, i.l, i.n, i.samples, mode)?
    } else {
        let mut table = build_table(cfg, i.window)?;
        table.ensure_ls(i.q)?;
        verify_induction(&sys, &table, i.q, i.n, i.samples, mode)?
    };
    let rows = report
        .samples
        .iter()
        .map(|s| {
            vec![
                num(s.beta),
                s.past_ok.to_string(),
                s.regular_ok.to_string(),
                s.window_ok.to_string(),
                s.deriv_ok.to_string(),
                num(s.log_abs_deriv),
                s.first_violation.map(|j| j.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    sink.csv(
        ".csv",
        &["beta", "past_ok", "regular_ok", "window_ok", "deriv_ok", "log_abs_deriv", "first_violation"],
        rows,
    )?;
    sink.json(&sys.name, report.holds, to_json(&report))?;
    Ok((report.holds, format!("{}: q = {}, n = {}, holds: {}", sys.name, report.q, report.n, report.holds)))
}

fn timesets(cfg: &ExperimentConfig, sink: &mut Sink) -> Step {
    let t = &cfg.timesets;
    let table = build_table(cfg, t.window)?;
    let report = table.verify_lemmas(t.budget);
    let export = table.export(t.export_n);
    let ok = report.asserted_pass();
    let rows = export
        .rows
        .iter()
        .map(|r| vec![r.j.to_string(), r.p.to_string(), r.q_inf.to_string(), r.in_omega_0.to_string(), r.in_omega_inf.to_string()])
        .collect();
    sink.csv(".csv", &["j", "p", "q_inf", "in_omega_0", "in_omega_inf"], rows)?;
    let lemma_rows = report
        .lemmas
        .iter()
        .map(|l| {
            vec![
                l.name.to_string(),
                l.asserted.to_string(),
                l.checked.to_string(),
                l.counterexamples.to_string(),
                l.first.clone().unwrap_or_default(),
            ]
        })
        .collect();
    sink.csv(".lemmas.csv", &["lemma", "asserted", "checked", "counterexamples", "first"], lemma_rows)?;
    let label = format!("timesets(alpha={}, gamma={})", cfg.system.alpha, cfg.system.gamma);
    sink.json(&label, ok, json!({ "lemmas": report, "table": export }))?;
    let failing: Vec<&str> = report.lemmas.iter().filter(|l| l.asserted && !l.passed()).map(|l| l.name).collect();
    Ok((ok, format!("{label}: {} checks, failing: {failing:?}", report.lemmas.len())))
}

fn peak_rows(step: usize, peaks: &[Peak]) -> Vec<Vec<String>> {
    peaks
        .iter()
        .map(|p| {
            vec![
                step.to_string(),
                // lineages are numbered by the 1-based step they start at
                p.generation.map(|g| (g + 1).to_string()).unwrap_or_default(),
                num(p.location),
                num(p.depth),
                num(p.slope_left),
                num(p.slope_right),
                num(p.width),
            ]
        })
        .collect()
}

const PEAK_HEADER: [&str; 7] = ["step", "generation", "location", "depth", "slope_left", "slope_right", "width"];

fn peaks(cfg: &ExperimentConfig, sink: &mut Sink) -> Step {
    let sys = cfg.system().map_err(|e| RunError::Usage(e.to_string()))?;
    let p = &cfg.peaks;
    let omega = sys.omega();
    let base = uniform_grid(cfg.run.grid);
    let tol = p.tol_cells / cfg.run.grid as f64;
    match p.source {
        PeakSource::Upper => {
            let g = converge_boundary(&sys, Boundary::Upper, &base, 1e-10, 256, cfg.run.iterates.max(256));
            let depth = p.min_depth.unwrap_or_else(|| default_min_depth(&g));
            let found = detect_peaks(&g, depth);
            let chain = chain_in_graph(&found, omega, omega, tol);
            let rate = sharpening_rate(&chain).ok();
            sink.csv(".csv", &PEAK_HEADER, peak_rows(0, &found))?;
            sink.json(
                &sys.name,
                true,
                json!({
                    "residual": g.residual,
                    "iterates_used": g.iterates_used,
                    "min_depth": depth,
                    "peaks": found,
                    "chain_length": chain.len(),
                    "sharpening_rate": rate,
                }),
            )?;
            let marks: Vec<(f64, f64)> = found.iter().map(|q| (q.location, g.values[q.index])).collect();
            sink.svg(
                &[Panel {
                    title: sys.name.clone(),
                    series: vec![Series::new("upper", ATTRACTOR, points(&g)), Series::new("peaks", REPELLER, marks)],
                    y_range: None,
                }],
                &Style { columns: 1, ..Style::default() },
            )?;
            Ok((true, format!("{}: {} peaks, chain of {}", sys.name, found.len(), chain.len())))
        }
        PeakSource::Iterates => {
            // fibres over ω_1..ω_n are where new peaks are expected
            let orbit: Vec<f64> = (1..=p.steps as i64).map(|j| orbit_point(omega, j)).collect();
            let grid = merge_grids(&[base, orbit]);
            let depth = p.min_depth.unwrap_or(1e-6);
            let samples: Vec<GraphSample> =
                (1..=p.steps).map(|k| iterate_boundary_on(&sys, Boundary::Upper, k, &grid)).collect();
            let steps: Vec<Vec<Peak>> = samples.iter().map(|g| detect_peaks(g, depth)).collect();
            let report = track_peaks(&steps, omega, tol);
            let mut rows = vec![];
            for (k, s) in report.steps.iter().enumerate() {
                rows.extend(peak_rows(k + 1, s));
            }
            sink.csv(".csv", &PEAK_HEADER, rows)?;
            let one_new = report.new_per_step.iter().all(|&c| c == 1);
            sink.json(
                &sys.name,
                true,
                json!({
                    "min_depth": depth,
                    "counts": report.steps.iter().map(Vec::len).collect::<Vec<_>>(),
                    "new_per_step": report.new_per_step,
                    "unmatched": report.unmatched,
                    "chains": report.chains,
                }),
            )?;
            let panels: Vec<Panel> = samples
                .iter()
                .enumerate()
                .map(|(k, g)| Panel {
                    title: format!("n = {}", k + 1),
                    series: vec![Series::new("iterate", ATTRACTOR, points(g))],
                    y_range: Some(sys.domain()),
                })
                .collect();
            sink.svg(&panels, &Style { columns: 3, ..Style::default() })?;
            Ok((true, format!("{}: {} steps, one new peak per step: {one_new}", sys.name, p.steps)))
        }
    }
}

fn harper(cfg: &ExperimentConfig, sink: &mut Sink) -> Step {
    if cfg.system.family != Family::Harper {
        return Err(RunError::Usage("the harper command needs system.family = \"harper\"".into()));
    }
    let sys = cfg.system().map_err(|e| RunError::Usage(e.to_string()))?;
    let grid = uniform_grid(cfg.run.grid);
    let n = cfg.run.iterates;
    let attractor = iterate_on_grid(&sys, 0.0, n, &grid, GraphKind::Upper);
    let repeller = pullback_graph(&sys, 0.0, cfg.harper.repeller_iterates, &grid)?;
    let lyap_attr = orbit_lyapunov(&sys, 0.0, 0.0, cfg.lyapunov.n, cfg.lyapunov.transient);
    let lyap_rep = backward_orbit_lyapunov(&sys, 0.0, 0.0, cfg.lyapunov.n, cfg.lyapunov.transient)?;
    let rows = grid
        .iter()
        .zip(attractor.values.iter().zip(&repeller.values))
        .map(|(t, (a, r))| vec![num(*t), num(*a), num(*r)])
        .collect();
    sink.csv(".csv", &["theta", "attractor", "repeller"], rows)?;
    sink.columnar(".attractor.bin", &attractor)?;
    sink.columnar(".repeller.bin", &repeller)?;
    sink.json(
        &sys.name,
        true,
        json!({
            "attractor": { "iterates": attractor.iterates_used, "residual": attractor.residual, "orbit_exponent": lyap_attr },
            "repeller": { "iterates": repeller.iterates_used, "residual": repeller.residual, "orbit_exponent": lyap_rep },
        }),
    )?;
    let half_pi = std::f64::consts::FRAC_PI_2;
    sink.svg(
        &[Panel {
            title: sys.name.clone(),
            series: vec![
                Series::new("repeller", REPELLER, points(&repeller)),
                Series::new("attractor", ATTRACTOR, points(&attractor)),
            ],
            y_range: Some((-half_pi, half_pi)),
        }],
        &Style { columns: 1, ..Style::default() },
    )?;
    Ok((true, format!("{}: attractor exponent {lyap_attr:.6}, repeller exponent {lyap_rep:.6}", sys.name)))
}

fn potential(cfg: &ExperimentConfig) -> ForcingFunction {
    match cfg.system.potential {
        Potential::Cos => ForcingFunction::cos_2pi(),
        Potential::Peak => ForcingFunction::peak(cfg.system.peak_slope, 0.0),
    }
}

fn cocycle(cfg: &ExperimentConfig, sink: &mut Sink) -> Step {
    let spec = cfg.rotation().map_err(|e| RunError::Usage(e.to_string()))?;
    let c = &cfg.cocycle;
    let v = potential(cfg);
    let lambda = cfg.system.lambda;
    let floor = (lambda.abs() / 2.0).ln().max(0.0);
    let mut rows = vec![];
    let mut out = vec![];
    let mut ok = true;
    for &e in &c.energies {
        let est = cocycle_lyapunov(e, lambda, &v, &spec, c.n, c.samples, cfg.run.seed);
        let crit = if c.critical { Some(lambda_c(e, &v, &spec, c.tol, &escape_options(cfg))?) } else { None };
        let above = est.mean >= floor - c.bound_slack;
        ok &= above;
        rows.push(vec![
            num(e),
            num(est.mean),
            num(est.stderr),
            num(floor),
            crit.map(|k| num(k.lambda_lo)).unwrap_or_default(),
            crit.map(|k| num(k.lambda_hi)).unwrap_or_default(),
        ]);
        out.push(json!({ "e": e, "estimate": est, "lower_bound": floor, "above_bound": above, "critical": crit }));
    }
    sink.csv(".csv", &["e", "lyapunov", "stderr", "lower_bound", "lambda_c_lo", "lambda_c_hi"], rows)?;
    let label = format!("schrodinger-cocycle(lambda={lambda})");
    sink.json(&label, ok, json!({ "n": c.n, "samples": c.samples, "seed": cfg.run.seed, "energies": out }))?;
    Ok((ok, format!("{label}: {} energies, all above max(0, log|lambda|/2): {ok}", c.energies.len())))
}
