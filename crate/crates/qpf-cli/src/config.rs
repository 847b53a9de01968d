//! Experiment configuration: a TOML document with one table per module.
//!
//! Every key has a default, so an empty document is a valid configuration.
//! Overrides of the form `section.key=value` are applied to the parsed
//! document before it is deserialized, which is how command-line flags take
//! precedence over the file.

use std::fmt;
use std::path::PathBuf;

use qpf::bifurcation::Mode;
use qpf::circle::RotationSpec;
use qpf::systems::{
    harper_interval_model, make_arctan_family, make_arnold, make_harper, make_pinched, make_rescaled_arctan,
    make_riccati, make_symmetric, make_tanh_strip, ArnoldForcing, ForcingFunction, QpfSystem,
};
use qpf::timesets::TimeSetParams;
use serde::{Deserialize, Serialize};

/// A configuration problem located at a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Arctan,
    RescaledArctan,
    Harper,
    Riccati,
    Pinched,
    Arnold,
    ArnoldPeak,
    Symmetric,
    TanhStrip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Potential {
    Cos,
    Peak,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub family: Family,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub e: f64,
    pub lambda: f64,
    pub potential: Potential,
    /// Slope of the peak potential.
    pub peak_slope: f64,
    /// `golden`, `silver` or a decimal number in `(0, 1)`.
    pub rotation: String,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            family: Family::Arctan,
            alpha: 10.0,
            beta: 0.9,
            gamma: 1.0 / 16.0,
            tau: 0.0,
            e: 4.4,
            lambda: 4.0,
            potential: Potential::Cos,
            peak_slope: 4.0,
            rotation: "golden".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Strict,
    Empirical,
}

impl From<ModeName> for Mode {
    fn from(m: ModeName) -> Mode {
        match m {
            ModeName::Strict => Mode::Strict,
            ModeName::Empirical => Mode::Empirical,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: usize,
    pub iterates: usize,
    pub mode: ModeName,
    pub seed: u64,
    /// Worker threads; `0` lets the pool decide. Not echoed into reports,
    /// since results do not depend on it.
    #[serde(skip_serializing)]
    pub threads: usize,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { grid: 1024, iterates: 5000, mode: ModeName::Empirical, seed: 0, threads: 0, svg: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Not echoed into reports, so relocated runs stay byte-identical.
    #[serde(skip_serializing)]
    pub dir: PathBuf,
    /// File stem of the artifacts; defaults to the command name.
    pub name: Option<String>,
    /// Also write binary columnar dumps of sampled graphs.
    pub binary: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("."), name: None, binary: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKindName {
    Upper,
    Lower,
    Middle,
    Repeller,
    Orbit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub kinds: Vec<GraphKindName>,
    /// Points of the single trajectory for `orbit`.
    pub orbit_points: usize,
    pub transient: usize,
    /// Initial horizon of the basin-boundary test for `middle`.
    pub middle_n_test: usize,
    /// Line pulled back for `repeller`.
    pub repeller_start: f64,
    /// Residual below which a graph exponent is reported.
    pub lyap_tol: f64,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            kinds: vec![GraphKindName::Upper],
            orbit_points: 100_000,
            transient: 1000,
            middle_n_test: 500,
            repeller_start: 0.0,
            lyap_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSection {
    pub n: usize,
    pub transient: usize,
    pub theta0: f64,
    /// Start values of forward orbits; both domain ends when empty.
    pub forward_from: Vec<f64>,
    /// Start values of backward orbits.
    pub backward_from: Vec<f64>,
}

impl Default for LyapunovSection {
    fn default() -> Self {
        LyapunovSection { n: 100_000, transient: 10_000, theta0: 0.0, forward_from: vec![], backward_from: vec![] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcateSection {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub n_max: usize,
    pub escape_grid: usize,
    /// Number of equally spaced `β` values tabulated in the CSV.
    pub scan: usize,
}

impl Default for BifurcateSection {
    fn default() -> Self {
        BifurcateSection { lo: 0.5, hi: 1.2, tol: 1e-5, n_max: 20_000, escape_grid: 2048, scan: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinkSourceSection {
    pub p_max: u32,
    pub window: i64,
}

impl Default for SinkSourceSection {
    fn default() -> Self {
        SinkSourceSection { p_max: 3, window: 3000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InductionSection {
    pub q: u32,
    /// Past length for `q = 0`.
    pub l: i64,
    pub n: i64,
    /// Interior parameters checked between `β⁺` and `β⁻`.
    pub samples: usize,
    pub window: i64,
}

impl Default for InductionSection {
    fn default() -> Self {
        InductionSection { q: 0, l: 10, n: 10, samples: 4, window: 3000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimesetsSection {
    pub window: i64,
    pub u: i64,
    pub v: i64,
    pub l2: f64,
    pub symmetric: bool,
    /// Times `N` examined by the sampled checks.
    pub budget: usize,
    /// `N` of the exported `A_N` / `R_N`.
    pub export_n: i64,
}

impl Default for TimesetsSection {
    fn default() -> Self {
        TimesetsSection { window: 10_000, u: 8, v: 58, l2: 2.0, symmetric: false, budget: 400, export_n: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeakSource {
    /// Peaks of the converged upper graph.
    Upper,
    /// Peaks of successive boundary iterates.
    Iterates,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeaksSection {
    pub source: PeakSource,
    pub steps: usize,
    /// Detection threshold; the default is derived from the sample.
    pub min_depth: Option<f64>,
    /// Matching tolerance in grid cells.
    pub tol_cells: f64,
}

impl Default for PeaksSection {
    fn default() -> Self {
        PeaksSection { source: PeakSource::Upper, steps: 6, min_depth: None, tol_cells: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarperSection {
    pub repeller_iterates: usize,
}

impl Default for HarperSection {
    fn default() -> Self {
        HarperSection { repeller_iterates: 5000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CocycleSection {
    pub energies: Vec<f64>,
    pub n: usize,
    pub samples: usize,
    /// Also bisect the critical coupling at each energy.
    pub critical: bool,
    pub tol: f64,
    /// Allowed shortfall of an estimate below `max(0, log(|λ|/2))`.
    pub bound_slack: f64,
}

impl Default for CocycleSection {
    fn default() -> Self {
        CocycleSection { energies: vec![0.0, 2.0, 4.3, 4.4], n: 100_000, samples: 64, critical: false, tol: 1e-3, bound_slack: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub offsets: Vec<f64>,
    pub n_avg: usize,
    pub transient: usize,
    pub eps: f64,
    /// Orbit fibres `ω_j`, `|j| ≤ orbit_points`, added to the gap grid.
    pub orbit_points: i64,
}

impl Default for ScalingSection {
    fn default() -> Self {
        ScalingSection {
            lo: 0.9,
            hi: 1.0,
            tol: 1e-5,
            offsets: vec![1e-2, 10f64.powf(-2.5), 1e-3, 10f64.powf(-3.5)],
            n_avg: 100_000,
            transient: 10_000,
            eps: 0.05,
            orbit_points: 200,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
    pub graph: GraphSection,
    pub lyapunov: LyapunovSection,
    pub bifurcate: BifurcateSection,
    pub sink_source: SinkSourceSection,
    pub induction: InductionSection,
    pub timesets: TimesetsSection,
    pub peaks: PeaksSection,
    pub harper: HarperSection,
    pub cocycle: CocycleSection,
    pub scaling: ScalingSection,
}

/// Parses a right-hand side as a TOML value, falling back to a string.
fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies `section.key=value` to a parsed document.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| err(assignment, "override must have the form section.key=value"))?;
    let key = key.trim();
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| err(key, "override key must have the form section.key"))?;
    let table = doc
        .entry(section.replace('-', "_"))
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(t) = table else {
        return Err(err(section, "not a table"));
    };
    t.insert(field.replace('-', "_"), parse_scalar(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Parses a TOML document, applies overrides and validates the result.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| err("<config>", e.message()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(doc)).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.into_inner().to_string();
            err(&path, msg.lines().next().unwrap_or_default())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rotation(&self) -> Result<RotationSpec, ConfigError> {
        match self.system.rotation.as_str() {
            "golden" => Ok(RotationSpec::golden_mean()),
            "silver" => Ok(RotationSpec::silver_mean()),
            s => match s.parse::<f64>() {
                Ok(w) if w > 0.0 && w < 1.0 => Ok(RotationSpec::new(w)),
                _ => Err(err("system.rotation", "expected golden, silver or a number in (0, 1)")),
            },
        }
    }

    fn potential(&self) -> ForcingFunction {
        match self.system.potential {
            Potential::Cos => ForcingFunction::cos_2pi(),
            Potential::Peak => ForcingFunction::peak(self.system.peak_slope, 0.0),
        }
    }

    /// The configured system at its configured parameters.
    pub fn system(&self) -> Result<QpfSystem, ConfigError> {
        self.system_at(self.system.beta)
    }

    /// The configured family with the forcing parameter set to `beta`.
    pub fn system_at(&self, beta: f64) -> Result<QpfSystem, ConfigError> {
        let s = &self.system;
        let spec = self.rotation()?;
        Ok(match s.family {
            Family::Arctan => make_arctan_family(s.alpha, beta, spec),
            Family::RescaledArctan => make_rescaled_arctan(s.alpha, spec).with_gamma(s.gamma).at(beta),
            Family::Harper => make_harper(s.e, s.lambda, self.potential(), spec),
            Family::Riccati => make_riccati(s.e, s.lambda, self.potential(), spec),
            Family::Pinched => make_pinched(s.alpha, spec),
            Family::Arnold => make_arnold(s.tau, s.alpha, beta, spec, ArnoldForcing::Sine),
            Family::ArnoldPeak => make_arnold(s.tau, s.alpha, beta, spec, ArnoldForcing::Peak),
            Family::Symmetric => make_symmetric(s.alpha, beta, spec),
            Family::TanhStrip => make_tanh_strip(spec),
        })
    }

    /// Whether the family has a forcing parameter `β` to vary.
    pub fn has_beta(&self) -> bool {
        matches!(
            self.system.family,
            Family::Arctan | Family::RescaledArctan | Family::Arnold | Family::ArnoldPeak | Family::Symmetric
        )
    }

    pub fn timeset_params(&self) -> Result<TimeSetParams, ConfigError> {
        let t = &self.timesets;
        Ok(TimeSetParams::new(self.system.alpha, self.system.gamma, t.l2, self.rotation()?)
            .with_uv(t.u, t.v)
            .symmetric(t.symmetric)
            .strict(self.run.mode == ModeName::Strict))
    }

    /// Range checks on every numeric field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.system;
        let finite = |path: &str, x: f64| if x.is_finite() { Ok(()) } else { Err(err(path, "must be finite")) };
        for (p, x) in [
            ("system.alpha", s.alpha),
            ("system.beta", s.beta),
            ("system.gamma", s.gamma),
            ("system.tau", s.tau),
            ("system.e", s.e),
            ("system.lambda", s.lambda),
            ("system.peak_slope", s.peak_slope),
        ] {
            finite(p, x)?;
        }
        self.rotation()?;
        match s.family {
            Family::Arctan | Family::Symmetric | Family::Pinched if s.alpha <= 1.0 => {
                return Err(err("system.alpha", "must exceed 1"));
            }
            Family::RescaledArctan if s.alpha < 1.0 => return Err(err("system.alpha", "must be at least 1")),
            Family::Arnold | Family::ArnoldPeak if !(0.0..1.0).contains(&s.alpha) => {
                return Err(err("system.alpha", "must lie in [0, 1) for an invertible circle map"));
            }
            _ => {}
        }
        if !(s.gamma > 0.0 && s.gamma < 1.0) {
            return Err(err("system.gamma", "must lie in (0, 1)"));
        }
        if s.peak_slope <= 0.0 {
            return Err(err("system.peak_slope", "must be positive"));
        }
        let r = &self.run;
        if !(2..=1 << 22).contains(&r.grid) {
            return Err(err("run.grid", "must lie in [2, 4194304]"));
        }
        if r.iterates == 0 || r.iterates > 100_000_000 {
            return Err(err("run.iterates", "must lie in [1, 10^8]"));
        }
        if r.threads > 1024 {
            return Err(err("run.threads", "must be at most 1024"));
        }
        let b = &self.bifurcate;
        finite("bifurcate.lo", b.lo)?;
        finite("bifurcate.hi", b.hi)?;
        if !(b.lo < b.hi) {
            return Err(err("bifurcate.hi", "must exceed bifurcate.lo"));
        }
        if !(b.tol > 0.0) {
            return Err(err("bifurcate.tol", "must be positive"));
        }
        if b.n_max == 0 || b.escape_grid == 0 {
            return Err(err("bifurcate.n_max", "escape horizon and grid must be positive"));
        }
        let sc = &self.scaling;
        if !(sc.lo < sc.hi) {
            return Err(err("scaling.hi", "must exceed scaling.lo"));
        }
        if let Some(i) = sc.offsets.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(err(&format!("scaling.offsets[{i}]"), "must be positive"));
        }
        if !(sc.eps > 0.0) {
            return Err(err("scaling.eps", "must be positive"));
        }
        let t = &self.timesets;
        if t.window < 1 {
            return Err(err("timesets.window", "must be positive"));
        }
        if t.u < 1 || t.v < 1 {
            return Err(err("timesets.u", "u and v must be positive"));
        }
        if !(t.l2 > 0.0) {
            return Err(err("timesets.l2", "must be positive"));
        }
        let i = &self.induction;
        if i.l < 0 || i.n < 1 {
            return Err(err("induction.n", "need l >= 0 and n >= 1"));
        }
        if self.sink_source.p_max == 0 {
            return Err(err("sink_source.p_max", "must be at least 1"));
        }
        if self.cocycle.n == 0 || self.cocycle.samples == 0 {
            return Err(err("cocycle.n", "n and samples must be positive"));
        }
        if self.system.family == Family::Harper && self.cocycle.critical {
            for (k, &e) in self.cocycle.energies.iter().enumerate() {
                if harper_interval_model(e).is_err() {
                    return Err(err(&format!("cocycle.energies[{k}]"), "critical coupling needs E > 2"));
                }
            }
        }
        if let Some(d) = self.peaks.min_depth {
            if !(d >= 0.0) {
                return Err(err("peaks.min_depth", "must be non-negative"));
            }
        }
        if !(self.peaks.tol_cells > 0.0) {
            return Err(err("peaks.tol_cells", "must be positive"));
        }
        Ok(())
    }
}
