//! Runs a configured pipeline and writes its tables.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use tdspectra::cascaded::bank_manifest;
use tdspectra::{
    analyzer_spectrum, correlation_grid, find_peaks, physical_spectrum_scan, run_bank, three_level_model,
    wk_spectrum, DensityMatrix, DetectionOperator, Frame, PeakList, SpectrumTrace, WkOptions,
};

use crate::config::{Scenario, ScenarioConfig};

/// Version and `git describe` of this build.
pub const BUILD: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("TDSPECTRA_GIT_DESCRIBE"), ")");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Route {
    Wk,
    Physical,
    Analyzer,
}

impl Route {
    pub const ALL: [Route; 3] = [Route::Wk, Route::Physical, Route::Analyzer];

    pub fn as_str(self) -> &'static str {
        match self {
            Route::Wk => "wk",
            Route::Physical => "physical",
            Route::Analyzer => "analyzer",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TraceResult {
    pub trace: SpectrumTrace,
    pub peaks: PeakList,
}

#[derive(Clone, Debug)]
pub enum RouteOutcome {
    Done(Vec<TraceResult>),
    Missing(String),
}

/// Peak positions of every route at one readout time, matched in order.
#[derive(Clone, Debug)]
pub struct Alignment {
    pub readout_time: f64,
    pub tolerance: f64,
    /// One row per peak: the refined position from each route, `None` when
    /// that route has fewer peaks or is missing.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Alignment {
    pub fn spread(row: &[Option<f64>]) -> Option<f64> {
        let vals: Option<Vec<f64>> = row.iter().copied().collect();
        let vals = vals?;
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(hi - lo)
    }

    pub fn max_spread(&self) -> Option<f64> {
        self.rows.iter().map(|r| Self::spread(r)).try_fold(0.0, |acc, s| s.map(|s| f64::max(acc, s)))
    }

    pub fn agrees(&self) -> bool {
        !self.rows.is_empty() && self.max_spread().is_some_and(|s| s <= self.tolerance)
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub scenario: Scenario,
    pub routes: Vec<(Route, RouteOutcome)>,
    pub alignments: Vec<Alignment>,
    pub checks: Vec<String>,
    pub files: Vec<PathBuf>,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn incomplete(&self) -> bool {
        self.routes.iter().any(|(_, o)| matches!(o, RouteOutcome::Missing(_)))
    }

    pub fn traces(&self, route: Route) -> Option<&[TraceResult]> {
        self.routes.iter().find(|(r, _)| *r == route).and_then(|(_, o)| match o {
            RouteOutcome::Done(t) => Some(t.as_slice()),
            RouteOutcome::Missing(_) => None,
        })
    }
}

fn fmt_positions(ws: &[f64]) -> String {
    ws.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario: {}", self.scenario.as_str())?;
        for (route, outcome) in &self.routes {
            match outcome {
                RouteOutcome::Done(traces) => {
                    for t in traces {
                        writeln!(
                            f,
                            "{} t={}: peaks: {} @ ω≈{}",
                            route.as_str(),
                            t.trace.readout_time(),
                            t.peaks.len(),
                            fmt_positions(&t.peaks.refined_omegas())
                        )?;
                    }
                }
                RouteOutcome::Missing(why) => writeln!(f, "{}: MISSING ({why})", route.as_str())?,
            }
        }
        for a in &self.alignments {
            write!(f, "{}", alignment_table(a))?;
        }
        for c in &self.checks {
            writeln!(f, "check: {c}")?;
        }
        if self.incomplete() {
            writeln!(f, "status: incomplete")?;
        }
        write!(f, "wall time: {:.2?}", self.wall_time)
    }
}

pub fn alignment_table(a: &Alignment) -> String {
    let mut out = String::new();
    writeln!(out, "# alignment at t = {}, tolerance {:.4}", a.readout_time, a.tolerance).unwrap();
    writeln!(out, "peak\twk\tphysical\tanalyzer\tspread").unwrap();
    for (k, row) in a.rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.map_or("-".into(), |w| format!("{w:.4}"))).collect();
        let spread = Alignment::spread(row).map_or("-".into(), |s| format!("{s:.4}"));
        writeln!(out, "{k}\t{}\t{spread}", cells.join("\t")).unwrap();
    }
    let verdict = if a.agrees() { "agree" } else { "disagree" };
    writeln!(out, "# routes {verdict}").unwrap();
    out
}

/// `spectrum_<route>_t<t>.tsv`; the stationary trace uses `tinf`.
pub fn trace_file_name(route: Route, t: f64) -> String {
    format!("spectrum_{}_t{t}", route.as_str()) + ".tsv"
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn write(&mut self, name: &str, body: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }
}

fn with_peaks(trace: SpectrumTrace, cfg: &ScenarioConfig) -> TraceResult {
    let trace = trace.with_meta("build", BUILD);
    let peaks = find_peaks(&trace, cfg.min_prominence);
    TraceResult { trace, peaks }
}

fn run_wk(cfg: &ScenarioConfig, checks: &mut Vec<String>) -> anyhow::Result<Vec<TraceResult>> {
    let params = cfg.source_params();
    let model = three_level_model(&params, Frame::Rotating)?;
    let det = DetectionOperator::for_source(&params, Frame::Rotating)?;
    let wk = wk_spectrum(&model, &det, &cfg.omegas(), cfg.stationary.t_max, cfg.stationary.dtau, WkOptions::default())?;
    checks.push(format!("wk: steady state found, {} elastic lines removed", wk.elastic.len()));
    Ok(vec![with_peaks(wk.trace, cfg)])
}

fn run_physical(
    cfg: &ScenarioConfig,
    out: &mut Outputs,
    checks: &mut Vec<String>,
) -> anyhow::Result<Vec<TraceResult>> {
    let params = cfg.source_params();
    let model = three_level_model(&params, Frame::Rotating)?;
    let det = DetectionOperator::for_source(&params, Frame::Rotating)?;
    let rho0 = DensityMatrix::basis(model.space(), cfg.initial_index())?;
    let grid = correlation_grid(&model, &rho0, &det, cfg.horizon(), cfg.physical.grid_n, cfg.physical.dt)?;
    grid.check()?;
    checks.push(format!("physical: grid {}x{} conjugate-symmetric", grid.n() + 1, grid.n() + 1));
    if cfg.physical.write_grid {
        out.write("grid.tsv", &grid.to_tsv())?;
    }
    let traces = physical_spectrum_scan(&grid, &cfg.readout_times, &cfg.omegas(), cfg.physical.gamma_f)?;
    Ok(traces.into_iter().map(|t| with_peaks(t, cfg)).collect())
}

fn run_analyzer(
    cfg: &ScenarioConfig,
    out: &mut Outputs,
    checks: &mut Vec<String>,
    manifest_extra: &mut String,
) -> anyhow::Result<Vec<TraceResult>> {
    let cp = cfg.cascaded_params();
    let bank = cfg.bank_config();
    let method = cfg.analyzer.method.into();
    let records = run_bank(&cp, &bank, method, cfg.initial_index())?;
    for (idx, rec) in records.iter().enumerate() {
        out.write(&format!("excitation_w{idx}.tsv"), &rec.to_tsv())?;
    }
    checks.push(format!("analyzer: {} excitation records, all within [0, 1]", records.len()));
    manifest_extra.push_str(&bank_manifest(&cp, &bank, method));
    let traces = analyzer_spectrum(&records, &cfg.readout_times)?;
    Ok(traces.into_iter().map(|t| with_peaks(t, cfg)).collect())
}

/// Aligns the routes on the most prominent peaks; the stationary trace sets
/// how many peaks are compared.
fn align(routes: &[(Route, RouteOutcome)], cfg: &ScenarioConfig) -> Vec<Alignment> {
    let wk = routes.iter().find_map(|(r, o)| match (r, o) {
        (Route::Wk, RouteOutcome::Done(t)) => t.first(),
        _ => None,
    });
    let k = wk.map_or(0, |t| t.peaks.len());
    let omegas = cfg.omegas();
    let domega = if omegas.len() > 1 { omegas[1] - omegas[0] } else { 0.0 };
    let tolerance = 2.0 * cfg.physical.gamma_f.max(cfg.analyzer.gamma_b).max(domega);
    cfg.readout_times
        .iter()
        .map(|&t| {
            let columns: Vec<Option<Vec<f64>>> = Route::ALL
                .iter()
                .map(|route| {
                    let outcome = routes.iter().find(|(r, _)| r == route).map(|(_, o)| o)?;
                    let RouteOutcome::Done(traces) = outcome else { return None };
                    let tr = if *route == Route::Wk {
                        traces.first()?
                    } else {
                        traces.iter().find(|x| x.trace.readout_time() == t)?
                    };
                    Some(find_peaks(&tr.trace, 0.0).top_n(k).refined_omegas())
                })
                .collect();
            let rows = (0..k)
                .map(|i| columns.iter().map(|c| c.as_ref().and_then(|ws| ws.get(i).copied())).collect())
                .collect();
            Alignment { readout_time: t, tolerance, rows }
        })
        .collect()
}

fn manifest(cfg: &ScenarioConfig, report: &RunReport, status: &str, extra: &str) -> String {
    let mut m = String::new();
    writeln!(m, "# tdspectra {BUILD}").unwrap();
    writeln!(m, "# scenario: {}", cfg.scenario.as_str()).unwrap();
    writeln!(m, "# status: {status}").unwrap();
    m.push_str("\n[config]\n");
    m.push_str(&cfg.to_toml());
    m.push_str("\n[peaks]\n");
    for (route, outcome) in &report.routes {
        match outcome {
            RouteOutcome::Done(traces) => {
                for t in traces {
                    let ws = fmt_positions(&t.peaks.refined_omegas());
                    writeln!(m, "{}\tt={}\t{}\t{ws}", route.as_str(), t.trace.readout_time(), t.peaks.len()).unwrap();
                }
            }
            RouteOutcome::Missing(why) => writeln!(m, "{}\tmissing\t{why}", route.as_str()).unwrap(),
        }
    }
    if !report.alignments.is_empty() {
        m.push_str("\n[alignment]\n");
        for a in &report.alignments {
            m.push_str(&alignment_table(a));
        }
    }
    m.push_str("\n[checks]\n");
    for c in &report.checks {
        writeln!(m, "{c}").unwrap();
    }
    if !extra.is_empty() {
        m.push_str("\n[bank]\n");
        m.push_str(extra);
    }
    m
}

/// Runs the configured scenario, writing all outputs under `cfg.output_dir`.
///
/// A single-route scenario fails on the first error, after writing a manifest
/// marked incomplete. `compare_all` keeps going and lists failed routes as
/// missing.
pub fn run_scenario(cfg: &ScenarioConfig) -> anyhow::Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let mut out = Outputs { dir: &cfg.output_dir, files: Vec::new() };
    let mut checks = Vec::new();
    let mut extra = String::new();

    let wanted: &[Route] = match cfg.scenario {
        Scenario::StationaryWk => &[Route::Wk],
        Scenario::PhysicalScan => &[Route::Physical],
        Scenario::AnalyzerBank => &[Route::Analyzer],
        Scenario::CompareAll => &Route::ALL,
    };
    let mut routes = Vec::new();
    let mut failure = None;
    for &route in wanted {
        let result = match route {
            Route::Wk => run_wk(cfg, &mut checks),
            Route::Physical => run_physical(cfg, &mut out, &mut checks),
            Route::Analyzer => run_analyzer(cfg, &mut out, &mut checks, &mut extra),
        }
        .with_context(|| format!("stage {} failed", route.as_str()));
        match result {
            Ok(mut traces) => {
                if cfg.scenario == Scenario::CompareAll {
                    for t in &mut traces {
                        *t = with_peaks(t.trace.to_unit_max(), cfg);
                    }
                }
                for t in &traces {
                    out.write(&trace_file_name(route, t.trace.readout_time()), &t.trace.to_tsv())?;
                }
                routes.push((route, RouteOutcome::Done(traces)));
            }
            Err(e) => {
                routes.push((route, RouteOutcome::Missing(format!("{e:#}"))));
                if cfg.scenario != Scenario::CompareAll {
                    failure = Some(e);
                    break;
                }
            }
        }
    }

    let alignments = if cfg.scenario == Scenario::CompareAll { align(&routes, cfg) } else { Vec::new() };
    let mut report = RunReport {
        scenario: cfg.scenario,
        routes,
        alignments,
        checks,
        files: Vec::new(),
        wall_time: Duration::ZERO,
    };
    let status = if report.incomplete() { "incomplete" } else { "complete" };
    out.write("manifest.txt", &manifest(cfg, &report, status, &extra))?;
    if let Some(e) = failure {
        return Err(e.context(anyhow!("outputs in {} are incomplete", cfg.output_dir.display())));
    }
    report.files = out.files;
    report.wall_time = start.elapsed();
    Ok(report)
}
