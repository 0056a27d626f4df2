//! Batch front-end for the haulmap pipeline.
//!
//! Each subcommand reads its inputs, runs one or more stages and writes its
//! outputs atomically, together with a JSON run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use haulmap::areas::{mark_areas, AreaError};
use haulmap::config::ConfigError;
use haulmap::inference::infer_graph;
use haulmap::io::{graph_to_geojson, marked_to_geojson, read_geojson, IoError};
use haulmap::synth::{evaluate, generate_trips, Metrics, ScenarioError, ScenarioKind, ScenarioSpec};
use haulmap::trace::{
    derive_kinematics, load_points, read_trips, segment_all, write_traces_csv, write_trips_csv,
    LoadOptions, TraceError, Trip,
};
use haulmap::{Config, Graph, Map};
use serde::Serialize;
use serde_json::{Map as JsonMap, Value};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "haulmap", version, about = "Road maps and free-drive areas from haul-truck GPS logs")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Config sources. Flags beat the config file, which beats the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Config file of `key = value` lines
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Input x/y columns are lon/lat degrees
    #[arg(long, global = true)]
    pub latlon: bool,
    #[arg(long, global = true, value_name = "M")]
    pub seed_radius: Option<f64>,
    #[arg(long, global = true, value_name = "M")]
    pub marker_radius: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    pub round_cap: Option<usize>,
    /// Matching tolerance for `eval` (m)
    #[arg(long, global = true, value_name = "M")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a GPS log into trips
    Segment { input: PathBuf, output: PathBuf },
    /// Build a road graph from trips
    Infer { trips: PathBuf, output: PathBuf },
    /// Mark intersections and free-drive areas in a road graph
    Mark { graph: PathBuf, output: PathBuf },
    /// Run every stage, writing all artifacts into a directory
    Pipeline { input: PathBuf, outdir: PathBuf },
    /// Generate a GPS log from a scenario file or built-in scenario name
    Synth { scenario: String, output: PathBuf },
    /// Score a road graph against a scenario's ground-truth lanes
    Eval { graph: PathBuf, scenario: String },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("area marking did not converge within {0} rounds")]
    NonConvergence(usize),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Parse { .. } => 3,
            CliError::Invariant(_) => 4,
            CliError::NonConvergence(_) => 5,
        }
    }

    fn parse(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn config_error(path: &Path, err: ConfigError) -> CliError {
    match err {
        ConfigError::Invariant(m) => CliError::Invariant(m),
        other => CliError::parse(path, other),
    }
}

fn trace_error(path: &Path, err: TraceError) -> CliError {
    match err {
        TraceError::Io(e) => CliError::io(path, e),
        other => CliError::parse(path, other),
    }
}

fn geojson_error(path: &Path, err: IoError) -> CliError {
    match err {
        IoError::Graph(g) => CliError::Invariant(format!("{}: {g}", path.display())),
        other => CliError::parse(path, other),
    }
}

/// Builds the effective configuration.
pub fn resolve_config(o: &Overrides) -> Result<Config, CliError> {
    let mut cfg = Config::default();
    if let Some(path) = &o.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        cfg.apply_str(&text).map_err(|e| config_error(path, e))?;
    }
    let flag = Path::new("<flags>");
    let mut set = |key: &str, value: String| cfg.set(key, &value).map_err(|e| config_error(flag, e));
    if o.latlon {
        set("latlon", "true".into())?;
    }
    if let Some(v) = o.seed_radius {
        set("seed_radius", v.to_string())?;
    }
    if let Some(v) = o.marker_radius {
        set("marker_radius", v.to_string())?;
    }
    if let Some(v) = o.round_cap {
        set("round_cap", v.to_string())?;
    }
    if let Some(v) = o.tolerance {
        set("tolerance", v.to_string())?;
    }
    cfg.validate().map_err(|e| config_error(flag, e))?;
    Ok(cfg)
}

/// Record of one command run.
///
/// `wall_clock_ms` is the only field that varies between identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub status: String,
    pub config: Config,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub counts: JsonMap<String, Value>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Value>,
    pub wall_clock_ms: JsonMap<String, Value>,
}

impl RunManifest {
    fn new(command: &str, config: &Config) -> Self {
        RunManifest {
            command: command.into(),
            status: "ok".into(),
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: JsonMap::new(),
            warnings: Vec::new(),
            metrics: None,
            wall_clock_ms: JsonMap::new(),
        }
    }

    fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.into(), n.into());
    }

    fn timed<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let out = f();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        self.wall_clock_ms.insert(stage.into(), serde_json::json!(ms));
        out
    }

    fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    /// The manifest as JSON with the wall-clock section removed.
    pub fn deterministic_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        v.as_object_mut().expect("object").remove("wall_clock_ms");
        v
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Consistency of the recorded counts.
    pub fn check(&self) -> Result<(), String> {
        let get = |k: &str| self.counts.get(k).and_then(Value::as_u64);
        if let (Some(t), Some(c)) = (get("trips"), get("candidate_runs")) {
            if t > c {
                return Err(format!("{t} trips from only {c} candidate runs"));
            }
        }
        if let (Some(v), Some(r)) = (get("raw_vertices"), get("clusters")) {
            if v > r {
                return Err(format!("{v} vertices from only {r} clusters"));
            }
        }
        Ok(())
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn segment_text(text: &str, path: &Path, cfg: &Config, m: &mut RunManifest) -> Result<Vec<Trip<f64>>, CliError> {
    let loaded = m
        .timed("load", || load_points::<f64, _>(text.as_bytes(), LoadOptions { latlon: cfg.latlon }))
        .map_err(|e| trace_error(path, e))?;
    let points: usize = loaded.traces.iter().map(|t| t.points.len()).sum();
    m.count("traces", loaded.traces.len());
    m.count("points", points);
    m.count("duplicates_dropped", loaded.duplicates_dropped);
    if let Some((lon, lat)) = loaded.projection_origin {
        m.counts
            .insert("projection_origin".into(), serde_json::json!([lon, lat]));
    }
    let traces: Vec<_> = loaded.traces.into_iter().map(derive_kinematics).collect();
    let (trips, stats) = m.timed("segment", || segment_all(&traces, cfg));
    m.count("candidate_runs", stats.candidate_runs);
    m.count("slow_points", stats.slow_points);
    m.count("undersized_points", stats.undersized_points);
    m.count("trips", trips.len());
    if points == 0 {
        m.warn("input contains no GPS samples".into());
    }
    if trips.is_empty() {
        m.warn("no trips found".into());
    }
    for t in &trips {
        t.check(cfg)
            .map_err(|e| CliError::Invariant(format!("trip {}: {e}", t.trip_id)))?;
    }
    Ok(trips)
}

fn trips_csv(trips: &[Trip<f64>], path: &Path) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_trips_csv(&mut buf, trips).map_err(|e| trace_error(path, e))?;
    Ok(buf)
}

fn infer(trips: &[Trip<f64>], cfg: &Config, m: &mut RunManifest) -> Result<Graph, CliError> {
    let (graph, clusters) = m.timed("infer", || infer_graph(trips, cfg));
    graph
        .check_invariants()
        .map_err(|e| CliError::Invariant(e.to_string()))?;
    m.count("clusters", clusters);
    m.count("raw_vertices", graph.vertex_count());
    m.count("raw_edges", graph.edge_count());
    if graph.is_empty() {
        m.warn("inferred graph is empty".into());
    }
    Ok(graph)
}

fn mark(graph: &Graph, cfg: &Config, m: &mut RunManifest) -> Result<Map, CliError> {
    let map = match m.timed("mark", || mark_areas(graph, cfg)) {
        Ok(map) => map,
        Err(AreaError::NonConvergence { rounds, .. }) => return Err(CliError::NonConvergence(rounds)),
        Err(e) => return Err(CliError::Invariant(e.to_string())),
    };
    map.check_invariants().map_err(CliError::Invariant)?;
    m.count("vertices", map.graph.vertex_count());
    m.count("edges", map.graph.edge_count());
    m.count("areas", map.areas.len());
    m.count("rounds", map.rounds);
    Ok(map)
}

fn scenario_spec(arg: &str) -> Result<ScenarioSpec, CliError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(kind) = ScenarioKind::ALL.into_iter().find(|k| k.name() == arg) {
            return Ok(ScenarioSpec::new(kind));
        }
    }
    ScenarioSpec::parse(&read(path)?).map_err(|e| CliError::parse(path, e))
}

fn scenario_error(arg: &str, e: ScenarioError) -> CliError {
    match e {
        ScenarioError::Invariant(m) => CliError::Invariant(format!("{arg}: {m}")),
        other => CliError::parse(Path::new(arg), other),
    }
}

/// Result of a successful run.
#[derive(Debug)]
pub struct Outcome {
    pub manifest: RunManifest,
    /// Evaluation metrics, for `eval`.
    pub metrics: Option<Metrics>,
}

/// Runs one command. Outputs and manifests are written before returning.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = resolve_config(&cli.overrides)?;
    let mut metrics = None;
    let manifest = match &cli.command {
        Command::Segment { input, output } => {
            let mut m = RunManifest::new("segment", &cfg);
            m.inputs.push(display(input));
            let trips = segment_text(&read(input)?, input, &cfg, &mut m)?;
            write_atomic(output, &trips_csv(&trips, output)?)?;
            m.outputs.push(display(output));
            finish(m, &manifest_path(output))?
        }
        Command::Infer { trips, output } => {
            let mut m = RunManifest::new("infer", &cfg);
            m.inputs.push(display(trips));
            let text = read(trips)?;
            let parsed = read_trips::<f64, _>(text.as_bytes()).map_err(|e| trace_error(trips, e))?;
            m.count("trips", parsed.len());
            let graph = infer(&parsed, &cfg, &mut m)?;
            write_atomic(output, graph_to_geojson(&graph).as_bytes())?;
            m.outputs.push(display(output));
            finish(m, &manifest_path(output))?
        }
        Command::Mark { graph, output } => {
            let mut m = RunManifest::new("mark", &cfg);
            m.inputs.push(display(graph));
            let doc = read_geojson::<f64>(&read(graph)?).map_err(|e| geojson_error(graph, e))?;
            m.count("raw_vertices", doc.graph.vertex_count());
            m.count("raw_edges", doc.graph.edge_count());
            let map = mark(&doc.graph, &cfg, &mut m)?;
            write_atomic(output, marked_to_geojson(&map).as_bytes())?;
            m.outputs.push(display(output));
            finish(m, &manifest_path(output))?
        }
        Command::Pipeline { input, outdir } => {
            fs::create_dir_all(outdir).map_err(|e| CliError::io(outdir, e))?;
            let mut m = RunManifest::new("pipeline", &cfg);
            m.inputs.push(display(input));
            let trips = segment_text(&read(input)?, input, &cfg, &mut m)?;
            let trips_out = outdir.join("trips.csv");
            write_atomic(&trips_out, &trips_csv(&trips, &trips_out)?)?;
            let graph = infer(&trips, &cfg, &mut m)?;
            let raw_out = outdir.join("raw_graph.geojson");
            write_atomic(&raw_out, graph_to_geojson(&graph).as_bytes())?;
            let map = mark(&graph, &cfg, &mut m)?;
            let map_out = outdir.join("marked_map.geojson");
            write_atomic(&map_out, marked_to_geojson(&map).as_bytes())?;
            m.outputs = [trips_out, raw_out, map_out].iter().map(|p| display(p)).collect();
            finish(m, &outdir.join("manifest.json"))?
        }
        Command::Synth { scenario, output } => {
            let mut m = RunManifest::new("synth", &cfg);
            m.inputs.push(scenario.clone());
            let spec = scenario_spec(scenario)?;
            let built = spec.build().map_err(|e| scenario_error(scenario, e))?;
            let traces = m.timed("generate", || generate_trips::<f64>(&built));
            let mut buf = Vec::new();
            write_traces_csv(&mut buf, &traces).map_err(|e| trace_error(output, e))?;
            m.count("traces", traces.len());
            m.count("points", traces.iter().map(|t| t.points.len()).sum());
            m.count("lanes", built.lanes.len());
            write_atomic(output, &buf)?;
            m.outputs.push(display(output));
            finish(m, &manifest_path(output))?
        }
        Command::Eval { graph, scenario } => {
            let mut m = RunManifest::new("eval", &cfg);
            m.inputs.push(display(graph));
            m.inputs.push(scenario.clone());
            let doc = read_geojson::<f64>(&read(graph)?).map_err(|e| geojson_error(graph, e))?;
            let built = scenario_spec(scenario)?
                .build()
                .map_err(|e| scenario_error(scenario, e))?;
            let result = m.timed("evaluate", || evaluate(&doc.graph, &built, cfg.tolerance));
            m.metrics = Some(serde_json::json!({
                "coverage": result.coverage,
                "precision": result.precision,
                "mean_offset": result.mean_offset,
                "tolerance": cfg.tolerance,
            }));
            metrics = Some(result);
            finish(m, &manifest_path(graph).with_file_name(eval_manifest_name(graph)))?
        }
    };
    Ok(Outcome { manifest, metrics })
}

fn eval_manifest_name(graph: &Path) -> String {
    let stem = graph.file_name().unwrap_or_default().to_string_lossy();
    format!("{stem}.eval.json")
}

fn finish(m: RunManifest, path: &Path) -> Result<RunManifest, CliError> {
    m.check().map_err(CliError::Invariant)?;
    write_atomic(path, m.to_json().as_bytes())?;
    Ok(m)
}
