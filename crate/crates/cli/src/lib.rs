//! `wlingam` command line: one subcommand per pipeline stage.
//!
//! Every subcommand writes its artifacts plus `<command>.manifest.json`
//! into the output directory. Artifacts are byte-identical across reruns
//! with the same inputs; the wall-clock timestamp lives only in the manifest.
//!
//! Exit status is 0 on success, 1 when arguments or input files fail
//! validation, 2 when the computation itself fails.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use wlingam::bootstrap::{histogram_export, run_bootstrap, write_draws};
use wlingam::effects::{build_stacked, effect_rows, write_effects_csv};
use wlingam::mask::{build_default_mask, validate_mask, BlockOrder};
use wlingam::motif::{extract_motif, to_dot, CoefficientScale, DEFAULT_EDGE_THRESHOLD};
use wlingam::panel::{ingest_long_csv, summarize, write_long_csv};
use wlingam::provenance::{sha256_hex, LIBRARY_VERSION};
use wlingam::simulator::{self, EffectBundle, QueryMode, SimError, SimQuery};
use wlingam::{presets, synth, BootstrapConfig, BootstrapSummary, EffectQuery, LongitudinalModel, PanelSchema, PkMask};

#[derive(Debug, Parser)]
#[command(name = "wlingam", version, about = "Windowed longitudinal LiNGAM pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a long-format panel CSV and write `panel.meta.json`.
    Ingest(IngestArgs),
    /// Build the default prior-knowledge mask for a schema and validate it.
    Mask(MaskArgs),
    /// Fit the longitudinal model; writes `model.json`.
    Fit(FitArgs),
    /// Total effects from every source at the anchor to each outcome.
    Effects(EffectsArgs),
    /// Nonparametric bootstrap over subjects.
    Bootstrap(BootstrapArgs),
    /// Edges recurring at every time point.
    Motif(MotifArgs),
    /// Build `bundle.json` and optionally answer a query.
    Simulate(SimulateArgs),
    /// Generate a synthetic panel with known ground truth.
    Synth(SynthArgs),
    /// Serve the HTTP API over an artifact directory.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Directory for artifacts and the run manifest.
    #[arg(long, env = "WLINGAM_OUT", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PanelInputs {
    #[arg(long, env = "WLINGAM_PANEL", default_value = "panel.csv")]
    pub panel: PathBuf,
    /// Defaults to `schema.json` beside the panel, then the built-in health-checkup schema.
    #[arg(long, env = "WLINGAM_SCHEMA")]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub inputs: PanelInputs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long, env = "WLINGAM_SCHEMA")]
    pub schema: Option<PathBuf>,
    /// Block order JSON; defaults to the built-in order for the built-in schema, a coarse order otherwise.
    #[arg(long, env = "WLINGAM_BLOCKS")]
    pub blocks: Option<PathBuf>,
    /// Validate this mask instead of building one.
    #[arg(long)]
    pub check: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub inputs: PanelInputs,
    #[arg(long, env = "WLINGAM_MASK", default_value = "mask.json")]
    pub mask: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct EffectsArgs {
    #[arg(long, env = "WLINGAM_MODEL", default_value = "model.json")]
    pub model: PathBuf,
    /// Time index of the source variables.
    #[arg(long, env = "WLINGAM_ANCHOR", default_value_t = 1)]
    pub anchor: usize,
    #[arg(long, env = "WLINGAM_HORIZONS", value_delimiter = ',', default_value = "0,1,2")]
    pub horizons: Vec<usize>,
    #[arg(long, env = "WLINGAM_INCLUDE_AUXILIARY")]
    pub include_auxiliary: bool,
    #[arg(long, env = "WLINGAM_FORMAT", value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub inputs: PanelInputs,
    #[arg(long, env = "WLINGAM_MASK", default_value = "mask.json")]
    pub mask: PathBuf,
    /// Number of replicates.
    #[arg(long = "B", env = "WLINGAM_B", default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, env = "WLINGAM_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "WLINGAM_CI_LEVEL", default_value_t = 0.95)]
    pub ci_level: f64,
    /// Output does not depend on this.
    #[arg(long, env = "WLINGAM_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, env = "WLINGAM_ANCHOR", default_value_t = 1)]
    pub anchor: usize,
    #[arg(long, env = "WLINGAM_HORIZONS", value_delimiter = ',', default_value = "0,1,2")]
    pub horizons: Vec<usize>,
    #[arg(long, env = "WLINGAM_INCLUDE_AUXILIARY")]
    pub include_auxiliary: bool,
    /// Histogram bins per query.
    #[arg(long, env = "WLINGAM_BINS", default_value_t = 40)]
    pub bins: usize,
    #[arg(long, env = "WLINGAM_FORMAT", value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct MotifArgs {
    #[arg(long, env = "WLINGAM_MODEL", default_value = "model.json")]
    pub model: PathBuf,
    #[arg(long, env = "WLINGAM_EDGE_THRESHOLD", default_value_t = DEFAULT_EDGE_THRESHOLD, allow_negative_numbers = true)]
    pub edge_threshold: f64,
    /// Compare coefficients on the raw scale instead of standardized.
    #[arg(long)]
    pub raw: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub inputs: PanelInputs,
    #[arg(long, env = "WLINGAM_MODEL", default_value = "model.json")]
    pub model: PathBuf,
    #[arg(long, env = "WLINGAM_BOOTSTRAP", default_value = "bootstrap.json")]
    pub bootstrap: PathBuf,
    #[arg(long, env = "WLINGAM_ANCHOR", default_value_t = 1)]
    pub anchor: usize,
    #[arg(long, env = "WLINGAM_HORIZONS", value_delimiter = ',', default_value = "0,1,2")]
    pub horizons: Vec<usize>,
    /// Plausibility bounds JSON, `{"BMI": [10, 60], ...}`; unlisted variables get data-driven bounds.
    #[arg(long, env = "WLINGAM_BOUNDS")]
    pub bounds: Option<PathBuf>,
    /// Query JSON to answer against the new bundle; the answer goes to stdout and `answer.json`.
    #[arg(long)]
    pub query: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthSpec {
    PaperShaped,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthSpec::PaperShaped)]
    pub spec: SynthSpec,
    #[arg(long, env = "WLINGAM_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub subjects: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory holding `model.json`, `bundle.json` and optionally `motif.json`.
    #[arg(long, env = "WLINGAM_ARTIFACT_DIR", default_value = ".")]
    pub artifact_dir: PathBuf,
    #[arg(long, env = "WLINGAM_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: String,
    /// Allowed browser origin; repeatable. Any origin when absent.
    #[arg(long, env = "WLINGAM_CORS_ORIGIN", value_delimiter = ',')]
    pub cors_origin: Vec<String>,
}

/// Failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

fn invalid(msg: impl Display) -> Failure {
    Failure::Validation(msg.to_string())
}

fn runtime(msg: impl Display) -> Failure {
    Failure::Runtime(msg.to_string())
}

/// Input problems are the caller's to fix; everything else is a runtime failure.
fn classify(context: &str, e: wlingam::Error) -> Failure {
    use wlingam::Error as E;
    let msg = format!("{context}: {e}");
    match e {
        E::Csv(_)
        | E::Json(_)
        | E::InvalidSchema(_)
        | E::UnknownVariable(_)
        | E::NonNumeric { .. }
        | E::BinaryDomainViolation { .. }
        | E::OutOfRange { .. }
        | E::DuplicateCell { .. }
        | E::DimensionMismatch(_)
        | E::BlockOrder(_)
        | E::InvalidMask(_)
        | E::InvalidModel(_)
        | E::HorizonOutOfRange { .. }
        | E::InvalidConfig(_) => Failure::Validation(msg),
        E::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => Failure::Validation(msg),
        _ => Failure::Runtime(msg),
    }
}

type Run<T = ()> = Result<T, Failure>;

trait Context<T> {
    fn context(self, what: impl Display) -> Run<T>;
}

impl<T> Context<T> for wlingam::Result<T> {
    fn context(self, what: impl Display) -> Run<T> {
        self.map_err(|e| classify(&what.to_string(), e))
    }
}

/// Parses `argv` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

pub fn execute(command: Command) -> Run {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Mask(a) => mask(a),
        Command::Fit(a) => fit(a),
        Command::Effects(a) => effects(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Motif(a) => motif(a),
        Command::Simulate(a) => simulate(a),
        Command::Synth(a) => synth(a),
        Command::Serve(a) => serve(a),
    }
}

/// Audit record written beside each command's artifacts.
#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command: String,
    pub library_version: String,
    pub parameters: serde_json::Value,
    /// File name to sha256 of every input read.
    pub inputs: BTreeMap<String, String>,
    /// sha256 over the `inputs` map and `parameters`.
    pub inputs_hash: String,
    pub outputs: BTreeMap<String, String>,
    /// Seconds since the Unix epoch. The only field that varies between identical runs.
    pub created_unix: u64,
}

struct Recorder {
    command: &'static str,
    out: PathBuf,
    parameters: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn label(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

impl Recorder {
    fn new(command: &'static str, out: &Path, parameters: serde_json::Value) -> Run<Self> {
        std::fs::create_dir_all(out).map_err(|e| runtime(format!("--out {}: {e}", out.display())))?;
        Ok(Recorder {
            command,
            out: out.to_path_buf(),
            parameters,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    /// Reads an input file and records its hash.
    fn read(&mut self, flag: &str, path: &Path) -> Run<String> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            let msg = format!("{flag} {}: {e}", path.display());
            if e.kind() == std::io::ErrorKind::NotFound {
                invalid(msg)
            } else {
                runtime(msg)
            }
        })?;
        self.inputs.insert(label(path), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Run {
        let bytes = bytes.as_ref();
        let path = self.out.join(name);
        std::fs::write(&path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Run {
        let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
        text.push('\n');
        self.write(name, text)
    }

    fn finish(self) -> Run {
        let inputs_hash = sha256_hex(
            serde_json::to_string(&json!({ "inputs": &self.inputs, "parameters": &self.parameters }))
                .map_err(runtime)?
                .as_bytes(),
        );
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let manifest = RunManifest {
            command: self.command.to_string(),
            library_version: LIBRARY_VERSION.to_string(),
            parameters: self.parameters,
            inputs: self.inputs,
            inputs_hash,
            outputs: self.outputs,
            created_unix,
        };
        let path = self.out.join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(&manifest).map_err(runtime)? + "\n";
        std::fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(flag: &str, path: &Path, text: &str) -> Run<T> {
    serde_json::from_str(text).map_err(|e| invalid(format!("{flag} {}: {e}", path.display())))
}

fn load_schema(rec: &mut Recorder, explicit: Option<&Path>, beside: Option<&Path>) -> Run<PanelSchema> {
    let sibling = beside
        .map(|p| p.parent().unwrap_or(Path::new("")).join("schema.json"))
        .filter(|p| p.exists());
    match explicit.map(Path::to_path_buf).or(sibling) {
        Some(path) => {
            let text = rec.read("--schema", &path)?;
            let schema: PanelSchema = parse_json("--schema", &path, &text)?;
            schema.validate().context(format!("--schema {}", path.display()))?;
            Ok(schema)
        }
        None => Ok(presets::paper_schema()),
    }
}

fn load_panel(rec: &mut Recorder, inputs: &PanelInputs) -> Run<wlingam::Panel> {
    let schema = load_schema(rec, inputs.schema.as_deref(), Some(&inputs.panel))?;
    rec.read("--panel", &inputs.panel)?;
    ingest_long_csv(&inputs.panel, &schema).context(format!("--panel {}", inputs.panel.display()))
}

fn load_mask(rec: &mut Recorder, path: &Path, schema: &PanelSchema) -> Run<PkMask> {
    let text = rec.read("--mask", path)?;
    let file = parse_json("--mask", path, &text)?;
    let mask = PkMask::from_file(file).context(format!("--mask {}", path.display()))?;
    let report = validate_mask(&mask, schema).context(format!("--mask {}", path.display()))?;
    if !report.is_admissible() {
        return Err(invalid(format!(
            "--mask {}: {} violation(s), first: {:?}",
            path.display(),
            report.violations.len(),
            report.violations[0]
        )));
    }
    Ok(mask)
}

fn load_model(rec: &mut Recorder, path: &Path) -> Run<LongitudinalModel> {
    let text = rec.read("--model", path)?;
    LongitudinalModel::from_json(&text).context(format!("--model {}", path.display()))
}

fn check_horizons(schema: &PanelSchema, anchor: usize, horizons: &[usize]) -> Run {
    let t = schema.time_points();
    if anchor >= t {
        return Err(invalid(format!("--anchor {anchor}: panel has time points 0..{}", t - 1)));
    }
    if horizons.is_empty() {
        return Err(invalid("--horizons: at least one horizon is required"));
    }
    if let Some(h) = horizons.iter().find(|&&h| anchor + h >= t) {
        return Err(invalid(format!(
            "--horizons: horizon {h} is out of range (anchor {anchor}, T = {t}, largest allowed horizon {})",
            t - 1 - anchor
        )));
    }
    Ok(())
}

fn ingest(a: IngestArgs) -> Run {
    let mut rec = Recorder::new("ingest", &a.output.out, json!({}))?;
    let panel = load_panel(&mut rec, &a.inputs)?;
    rec.write_json("panel.meta.json", &panel.meta())?;
    rec.write_json("panel.summary.json", &summarize(&panel))?;
    let audit = panel.audit();
    log::info!("{} subjects kept, audit {audit:?}", panel.n_subjects());
    rec.finish()
}

fn mask(a: MaskArgs) -> Run {
    let mut rec = Recorder::new("mask", &a.output.out, json!({}))?;
    let schema = load_schema(&mut rec, a.schema.as_deref(), None)?;
    let mask = match &a.check {
        Some(path) => {
            let text = rec.read("--check", path)?;
            PkMask::from_file(parse_json("--check", path, &text)?).context(format!("--check {}", path.display()))?
        }
        None => {
            let blocks = match &a.blocks {
                Some(path) => {
                    let text = rec.read("--blocks", path)?;
                    parse_json::<BlockOrder>("--blocks", path, &text)?
                }
                None if schema == presets::paper_schema() => presets::paper_blocks(),
                None => BlockOrder::coarse(&schema),
            };
            build_default_mask(&schema, &blocks).context("--blocks")?
        }
    };
    let report = validate_mask(&mask, &schema).context("mask")?;
    rec.write_json("mask.report.json", &report)?;
    if !report.is_admissible() {
        rec.finish()?;
        return Err(invalid(format!(
            "mask has {} violation(s); see mask.report.json",
            report.violations.len()
        )));
    }
    if a.check.is_none() {
        rec.write("mask.json", mask.to_json_pretty().context("mask")? + "\n")?;
    }
    rec.finish()
}

fn fit(a: FitArgs) -> Run {
    let mut rec = Recorder::new("fit", &a.output.out, json!({}))?;
    let panel = load_panel(&mut rec, &a.inputs)?;
    let mask = load_mask(&mut rec, &a.mask, panel.schema())?;
    let model = wlingam::fit(&panel, &mask).context("fit")?;
    rec.write("model.json", model.to_json_pretty().context("fit")? + "\n")?;
    rec.finish()
}

fn effects(a: EffectsArgs) -> Run {
    let params = json!({ "anchor": a.anchor, "horizons": a.horizons, "includeAuxiliary": a.include_auxiliary });
    let mut rec = Recorder::new("effects", &a.output.out, params)?;
    let model = load_model(&mut rec, &a.model)?;
    check_horizons(&model.schema, a.anchor, &a.horizons)?;
    let sys = build_stacked(&model, a.include_auxiliary).context("effects")?;
    let rows = effect_rows(&sys, a.anchor, &a.horizons).context("effects")?;
    match a.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_effects_csv(&rows, &mut buf).context("effects")?;
            rec.write("effects.csv", buf)?;
        }
        Format::Json => rec.write_json("effects.json", &rows)?,
    }
    rec.finish()
}

/// Every (source at anchor, outcome, horizon) pair the point-estimate table reports.
fn default_queries(model: &LongitudinalModel, anchor: usize, horizons: &[usize], aux: bool) -> Run<Vec<EffectQuery>> {
    let sys = build_stacked(model, aux).context("bootstrap")?;
    Ok(effect_rows(&sys, anchor, horizons)
        .context("bootstrap")?
        .into_iter()
        .map(|r| EffectQuery::new(r.source, r.target, anchor, r.lag))
        .collect())
}

fn write_csv<S: Serialize>(rows: impl IntoIterator<Item = S>) -> Run<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(runtime)?;
    }
    w.into_inner().map_err(runtime)
}

fn bootstrap(a: BootstrapArgs) -> Run {
    let config = BootstrapConfig {
        replicates: a.replicates,
        seed: a.seed,
        ci_level: a.ci_level,
        workers: a.workers,
        include_auxiliary: a.include_auxiliary,
    };
    config.validate().map_err(|e| {
        let flag = match &e {
            wlingam::Error::InvalidConfig(m) if m.contains("replicates") => "--B",
            wlingam::Error::InvalidConfig(m) if m.contains("ci level") => "--ci-level",
            _ => "--workers",
        };
        invalid(format!("{flag}: {e}"))
    })?;
    if a.bins == 0 {
        return Err(invalid("--bins: must be at least 1"));
    }
    let params = json!({
        "config": &config,
        "anchor": a.anchor,
        "horizons": a.horizons,
        "bins": a.bins,
    });
    let mut rec = Recorder::new("bootstrap", &a.output.out, params)?;
    let panel = load_panel(&mut rec, &a.inputs)?;
    let mask = load_mask(&mut rec, &a.mask, panel.schema())?;
    check_horizons(panel.schema(), a.anchor, &a.horizons)?;
    let model = wlingam::fit(&panel, &mask).context("fit")?;
    let queries = default_queries(&model, a.anchor, &a.horizons, a.include_auxiliary)?;
    let summary = run_bootstrap(&panel, &mask, &config, &queries).context("bootstrap")?;
    rec.write_json("bootstrap.json", &summary)?;
    let mut draws = Vec::new();
    write_draws(&summary, &mut draws).map_err(runtime)?;
    rec.write("draws.bin", draws)?;
    let hist = histogram_export(&summary, a.bins).context("histogram")?;
    match a.format {
        Format::Json => rec.write_json("histograms.json", &hist)?,
        Format::Csv => {
            #[derive(Serialize)]
            struct Bin<'a> {
                source: &'a str,
                target: &'a str,
                anchor: usize,
                lag: usize,
                lower: f64,
                upper: f64,
                count: usize,
            }
            let bins = hist.iter().flat_map(|h| {
                h.counts.iter().enumerate().map(move |(k, &count)| Bin {
                    source: &h.query.source,
                    target: &h.query.target,
                    anchor: h.query.anchor,
                    lag: h.query.lag,
                    lower: h.edges[k],
                    upper: h.edges[k + 1],
                    count,
                })
            });
            rec.write("histograms.csv", write_csv(bins)?)?;
            #[derive(Serialize)]
            struct Interval<'a> {
                source: &'a str,
                target: &'a str,
                anchor: usize,
                lag: usize,
                point: f64,
                ci_low: f64,
                ci_high: f64,
                includes_zero: bool,
            }
            let rows = summary.queries.iter().map(|q| Interval {
                source: &q.query.source,
                target: &q.query.target,
                anchor: q.query.anchor,
                lag: q.query.lag,
                point: q.point,
                ci_low: q.ci_low,
                ci_high: q.ci_high,
                includes_zero: q.includes_zero,
            });
            rec.write("intervals.csv", write_csv(rows)?)?;
        }
    }
    rec.finish()
}

fn motif(a: MotifArgs) -> Run {
    if !(a.edge_threshold >= 0.0 && a.edge_threshold.is_finite()) {
        return Err(invalid(format!("--edge-threshold {}: must be a finite value >= 0", a.edge_threshold)));
    }
    let scale = if a.raw { CoefficientScale::Raw } else { CoefficientScale::Standardized };
    let mut rec = Recorder::new("motif", &a.output.out, json!({ "edgeThreshold": a.edge_threshold, "scale": scale }))?;
    let model = load_model(&mut rec, &a.model)?;
    let motif = extract_motif(&model, a.edge_threshold, scale).context("motif")?;
    rec.write_json("motif.json", &motif)?;
    rec.write("motif.dot", to_dot(&motif))?;
    rec.finish()
}

fn answer(bundle: &EffectBundle, q: &SimQuery) -> Result<simulator::SimAnswer, SimError> {
    let goal = match q.mode {
        Some(QueryMode::GoalSeek) => true,
        Some(QueryMode::Forward) => false,
        None => q.desired_target.is_some() && q.forward_value.is_none(),
    };
    if goal {
        simulator::goal_seek(bundle, q)
    } else {
        simulator::forward_query(bundle, q)
    }
}

fn simulate(a: SimulateArgs) -> Run {
    let params = json!({ "anchor": a.anchor, "horizons": a.horizons });
    let mut rec = Recorder::new("simulate", &a.output.out, params)?;
    let panel = load_panel(&mut rec, &a.inputs)?;
    check_horizons(panel.schema(), a.anchor, &a.horizons)?;
    let model = load_model(&mut rec, &a.model)?;
    let text = rec.read("--bootstrap", &a.bootstrap)?;
    let summary: BootstrapSummary = parse_json("--bootstrap", &a.bootstrap, &text)?;
    let bounds: BTreeMap<String, [f64; 2]> = match &a.bounds {
        Some(path) => {
            let text = rec.read("--bounds", path)?;
            parse_json("--bounds", path, &text)?
        }
        None => BTreeMap::new(),
    };
    let sources: Vec<String> = {
        let mut seen = BTreeSet::new();
        summary
            .queries
            .iter()
            .filter(|q| q.query.anchor == a.anchor && seen.insert(q.query.source.clone()))
            .map(|q| q.query.source.clone())
            .collect()
    };
    if sources.is_empty() {
        return Err(invalid(format!("--bootstrap: no queries at anchor {}", a.anchor)));
    }
    let variables = simulator::profile_variables(&panel, a.anchor, &bounds).context("--bounds")?;
    let bundle =
        simulator::build_bundle(&model, &summary, a.anchor, &a.horizons, &sources, variables).context("--bootstrap")?;
    rec.write("bundle.json", bundle.to_json_pretty().context("bundle")? + "\n")?;
    if let Some(path) = &a.query {
        let text = rec.read("--query", path)?;
        let q: SimQuery = parse_json("--query", path, &text)?;
        let ans = answer(&bundle, &q).map_err(|e| invalid(format!("--query {}: {e}", path.display())))?;
        rec.write_json("answer.json", &ans)?;
        println!("{}", serde_json::to_string_pretty(&ans).map_err(runtime)?);
    }
    rec.finish()
}

fn synth(a: SynthArgs) -> Run {
    if a.subjects < 10 {
        return Err(invalid(format!("--subjects {}: need at least 10", a.subjects)));
    }
    let params = json!({ "spec": "paper-shaped", "seed": a.seed, "subjects": a.subjects });
    let mut rec = Recorder::new("synth", &a.output.out, params)?;
    let spec = match a.spec {
        SynthSpec::PaperShaped => synth::paper_shaped(a.subjects, a.seed).context("synth")?,
    };
    let data = synth::generate(&spec).context("synth")?;
    let mut csv = Vec::new();
    write_long_csv(&data.panel, &mut csv).context("synth")?;
    rec.write("panel.csv", csv)?;
    rec.write_json("schema.json", &spec.schema)?;
    rec.write("mask.json", spec.mask.to_json_pretty().context("synth")? + "\n")?;
    rec.write_json("truth.json", &data.truth(&spec))?;
    rec.finish()
}

fn serve(a: ServeArgs) -> Run {
    let addr: std::net::SocketAddr = a
        .listen
        .parse()
        .map_err(|e| invalid(format!("--listen {}: {e}", a.listen)))?;
    let artifacts = wlingam_service::load_artifacts(&a.artifact_dir).map_err(|e| match e {
        wlingam_service::LoadError::Read { .. } => invalid(format!("--artifact-dir: {e}")),
        _ => invalid(format!("--artifact-dir {}: {e}", a.artifact_dir.display())),
    })?;
    let config = wlingam_service::ServiceConfig {
        cors_origins: a.cors_origin,
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| runtime(format!("--listen {addr}: {e}")))?;
        log::info!("listening on {addr}");
        wlingam_service::serve(listener, wlingam_service::AppState::loaded(artifacts), &config)
            .await
            .map_err(runtime)
    })
}
