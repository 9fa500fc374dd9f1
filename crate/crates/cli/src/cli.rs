//! The `reshare` command line: `parse`, `fit`, `simulate`, `predict` and
//! `features`.
//!
//! Exit codes: 0 success (including fits flagged as not converged), 1 I/O
//! failure, 2 usage, format or data error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use reshare_core::cascade::UNKNOWN_INITIATOR;
use reshare_core::features::{user_features, FeatureConfig, FeatureTable};
use reshare_core::kernels::kernel_value;
use reshare_core::likelihood::intensity_at;
use reshare_core::measures::{
    branching_factor_with, predict_final_popularity_hawkesn, predict_final_popularity_with, MarkLaw, ViralScore,
};
use reshare_core::rng::run_seed;
use reshare_core::seismic::seismic_predict;
use reshare_core::simulation::{continue_series, generate_series};
use reshare_core::{
    fit_series, group_by_initiator, Cascade, CascadeGroup, Error, FitConfig, FittedModel, Horizon, MarkSource,
    ModelType, SimConfig,
};

use crate::compare_ids;
use crate::csv_io::{fmt_f64, load_cascades_csv, write_cascades_csv};
use crate::error::{CliError, Result, EXIT_OK, EXIT_USAGE};
use crate::feature_csv::{write_features_csv, FEATURE_SCHEMA_VERSION};
use crate::manifest::{manifest_path, ManifestBuilder, SeedSource};
use crate::model_file::{IndexEntry, ModelFile, ModelIndex, ModelSet, INDEX_FILE, MODEL_SCHEMA_VERSION};
use crate::tweets::{parse_raw_tweets, write_users_csv, FieldMapping};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (model schema 1, feature schema 1)");

/// Event cap for simulations unless `--max-events` or `--no-cap` is given.
pub const CLI_MAX_EVENTS: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "reshare", version = VERSION, about = "Self-exciting point process models for reshare cascades")]
#[command(args_override_self = true)]
pub struct Cli {
    /// File of `key=value` lines setting any flag of the subcommand; flags
    /// given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a raw tweet dump (JSON lines) into a cascade CSV and a user table.
    Parse(ParseArgs),
    /// Fit a model to cascades, jointly per user with --group-by-user.
    Fit(FitArgs),
    /// Simulate fresh cascades, or continue observed ones.
    Simulate(SimulateArgs),
    /// Predict the final popularity of observed cascades.
    Predict(PredictArgs),
    /// Per-user temporal feature vectors.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Cascade CSV to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// User table; defaults to `<out stem>.users.csv`.
    #[arg(long)]
    pub users: Option<PathBuf>,
    /// Parse summary; defaults to `<out stem>.summary.json`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// JSON file mapping field names to dotted record paths.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Drop cascades whose source tweet is missing from the dump.
    #[arg(long)]
    pub drop_orphans: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, visible_alias = "model_type", value_parser = parse_model_type)]
    pub model_type: ModelType,
    /// One joint fit per initiating user instead of one over all cascades.
    #[arg(long, visible_alias = "group_by_user")]
    pub group_by_user: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Pareto exponent for E[m^β]; the empirical training marks otherwise.
    #[arg(long)]
    pub mark_alpha: Option<f64>,
    /// Output directory: one model JSON per group plus `index.json`.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Directory for (t, φ(t)) and (t, λ(t)) tables.
    #[arg(long, visible_alias = "emit_plot_data")]
    pub emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model JSON.
    #[arg(long, short)]
    pub model: PathBuf,
    /// Cascade CSV to continue instead of starting fresh cascades.
    #[arg(long = "continue", value_name = "CSV")]
    pub continue_from: Option<PathBuf>,
    /// Truncate continued cascades at this time before continuing.
    #[arg(long, visible_alias = "observe_until")]
    pub observe_until: Option<f64>,
    /// `extinction` or a time in seconds.
    #[arg(long, default_value = "extinction", value_parser = parse_horizon)]
    pub horizon: Horizon,
    #[arg(long, visible_alias = "n_runs", default_value_t = 1)]
    pub n_runs: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = CLI_MAX_EVENTS)]
    pub max_events: usize,
    /// Remove the event cap.
    #[arg(long)]
    pub no_cap: bool,
    /// Draw marks from a Pareto law with this exponent.
    #[arg(long)]
    pub mark_alpha: Option<f64>,
    /// Simulated cascades CSV (with a `simulated` column).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-run size table; defaults to `<out stem>.sizes.csv`.
    #[arg(long)]
    pub sizes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model JSON, SEISMIC preset, or a `fit` output directory.
    #[arg(long, short, required_unless_present = "seismic")]
    pub model: Option<PathBuf>,
    /// Use SEISMIC with the reference defaults.
    #[arg(long, conflicts_with = "model")]
    pub seismic: bool,
    #[arg(long, short)]
    pub input: PathBuf,
    /// Observation time (seconds from each cascade's start); each
    /// cascade's own horizon otherwise.
    #[arg(long, visible_alias = "observe_until")]
    pub observe_until: Option<f64>,
    /// Monte-Carlo runs for HawkesN.
    #[arg(long, visible_alias = "n_runs", default_value_t = 1000)]
    pub n_runs: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = CLI_MAX_EVENTS)]
    pub max_events: usize,
    #[arg(long)]
    pub mark_alpha: Option<f64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, visible_alias = "model_type", value_parser = parse_model_type)]
    pub model_type: ModelType,
    /// Keep the k users who started the most cascades (ties by user id).
    #[arg(long, visible_alias = "top_k_users", allow_negative_numbers = true)]
    pub top_k_users: Option<i64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long)]
    pub mark_alpha: Option<f64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn parse_model_type(s: &str) -> std::result::Result<ModelType, String> {
    s.parse::<ModelType>().map_err(|e: Error| e.to_string())
}

fn parse_horizon(s: &str) -> std::result::Result<Horizon, String> {
    if s.eq_ignore_ascii_case("extinction") {
        return Ok(Horizon::Extinction);
    }
    match s.parse::<f64>() {
        Ok(t) if t >= 0.0 && t.is_finite() => Ok(Horizon::Until(t)),
        _ => Err(format!("expected `extinction` or a non-negative time, got `{s}`")),
    }
}

/// Reads `key=value` lines into flags. `true` gives a bare switch, `false`
/// omits it; `#` starts a comment.
pub fn config_args(text: &str, source: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Format(format!("{source}: line {}: expected key=value", n + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(CliError::Format(format!("{source}: line {}: invalid key", n + 1)));
        }
        match value.trim() {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            v => {
                out.push(format!("--{key}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

/// Removes `--config FILE` and splices the file's flags in right after the
/// subcommand, ahead of the explicit flags so those override.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config: Option<PathBuf> = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let v = it
                .next()
                .ok_or_else(|| CliError::Usage(String::from("--config needs a file")))?;
            config = Some(PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let extra = config_args(&text, &path.display().to_string())?;
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(rest.len(), |i| i + 2);
    let tail = rest.split_off(at.min(rest.len()));
    rest.extend(extra.into_iter().map(OsString::from));
    rest.extend(tail);
    Ok(rest)
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Parse(a) => cmd_parse(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Features(a) => cmd_features(a),
    }
}

fn resolve_seed(seed: Option<u64>) -> (u64, SeedSource) {
    match seed {
        Some(s) => (s, SeedSource::Explicit),
        None => {
            let nanos = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_nanos() as u64);
            (nanos, SeedSource::Generated)
        }
    }
}

fn mark_law(alpha: Option<f64>) -> MarkLaw {
    match alpha {
        Some(alpha) => MarkLaw::PowerLaw { alpha },
        None => MarkLaw::Empirical,
    }
}

/// Marks for simulated events: Pareto when requested, else the training
/// marks of marked models, else 1.
fn mark_source(model: &FittedModel, alpha: Option<f64>) -> Result<MarkSource> {
    if let Some(alpha) = alpha {
        return Ok(MarkSource::PowerLaw { alpha });
    }
    if !model.family.is_marked() {
        return Ok(MarkSource::Constant { value: 1.0 });
    }
    if model.training_marks.is_empty() {
        return Err(CliError::Usage(format!(
            "{} model has no training marks; pass --mark-alpha",
            model.family
        )));
    }
    Ok(MarkSource::Empirical {
        marks: model.training_marks.clone(),
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_manifest(builder: ManifestBuilder, start: Instant, output: &Path, is_dir: bool) -> Result<()> {
    let m = builder.finish(start.elapsed());
    crate::write_json(&manifest_path(output, is_dir), &m)
}

fn require_positive(value: usize, flag: &str) -> Result<()> {
    if value == 0 {
        return Err(CliError::Usage(format!("{flag} must be at least 1")));
    }
    Ok(())
}

pub fn cmd_parse(a: &ParseArgs) -> Result<()> {
    let start = Instant::now();
    let mapping = match &a.mapping {
        Some(p) => FieldMapping::load(p)?,
        None => FieldMapping::default(),
    };
    let mut parsed = parse_raw_tweets(&a.input, &mapping)?;
    if a.drop_orphans {
        parsed.cascades.retain(|c| !c.orphan);
    }
    let users = a.users.clone().unwrap_or_else(|| sibling(&a.out, ".users.csv"));
    let summary_path = a.summary.clone().unwrap_or_else(|| sibling(&a.out, ".summary.json"));
    let mut summary = json!(parsed.summary);
    summary["cascades_written"] = json!(parsed.cascades.len());
    write_cascades_csv(&a.out, &parsed.cascades, None)?;
    write_users_csv(&users, &parsed.users)?;
    crate::write_json(&summary_path, &summary)?;
    println!("{summary}");

    let mut m = ManifestBuilder::new("parse", json!({ "mapping": mapping, "drop_orphans": a.drop_orphans }));
    m.input(&a.input)?;
    if let Some(p) = &a.mapping {
        m.input(p)?;
    }
    for p in [&a.out, &users, &summary_path] {
        m.output(p);
    }
    write_manifest(m, start, &a.out, false)
}

/// File-name-safe, unique model file names.
fn model_file_names(groups: &[CascadeGroup]) -> Vec<String> {
    let mut used = std::collections::HashSet::new();
    groups
        .iter()
        .map(|g| {
            let clean: String = g
                .group_key
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            let base = format!("model-{clean}");
            let mut name = format!("{base}.json");
            let mut k = 2;
            while !used.insert(name.to_ascii_lowercase()) {
                name = format!("{base}-{k}.json");
                k += 1;
            }
            name
        })
        .collect()
}

fn linspace(hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| (hi * i as f64 / (n - 1) as f64).min(hi))
}

fn csv_err(p: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::from_csv(p, e)
}

fn write_plot_data(dir: &Path, stem: &str, model: &FittedModel, group: &CascadeGroup) -> Result<()> {
    const POINTS: usize = 200;
    let horizon = group
        .cascades()
        .iter()
        .map(Cascade::observation_time)
        .fold(0.0, f64::max);
    let span = if horizon > 0.0 { horizon } else { 10.0 / model.params.theta };

    let path = dir.join(format!("{stem}.kernel.csv"));
    let mut w = csv::Writer::from_writer(crate::create_file(&path)?);
    w.write_record(["t", "phi"]).map_err(csv_err(&path))?;
    for t in linspace(span, POINTS) {
        let phi = kernel_value(&model.params, model.family, t, 1.0)?;
        w.write_record([fmt_f64(t), fmt_f64(phi)]).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join(format!("{stem}.intensity.csv"));
    let mut w = csv::Writer::from_writer(crate::create_file(&path)?);
    w.write_record(["cascade_id", "t", "lambda"]).map_err(csv_err(&path))?;
    for c in group.cascades() {
        for t in linspace(c.observation_time(), POINTS) {
            let lambda = intensity_at(&model.params, model.family, c, t)?;
            w.write_record([c.cascade_id.clone(), fmt_f64(t), fmt_f64(lambda)])
                .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let start = Instant::now();
    let family = a.model_type;
    if !family.is_hawkes() {
        return Err(CliError::Usage(String::from(
            "SEISMIC has no fitted parameters; use `predict --seismic`",
        )));
    }
    require_positive(a.restarts, "--restarts")?;
    let cascades = load_cascades_csv(&a.input, family.is_marked())?;
    let groups = if a.group_by_user {
        group_by_initiator(cascades)
    } else {
        vec![CascadeGroup::new("all", cascades)?]
    };
    let (seed, seed_source) = resolve_seed(a.seed);
    let config = FitConfig {
        n_restarts: a.restarts,
        ..FitConfig::default().with_seed(seed)
    };
    let law = mark_law(a.mark_alpha);
    let fits: Vec<_> = groups
        .par_iter()
        .map(|g| fit_series(g.cascades(), family, &config))
        .collect();

    let names = model_file_names(&groups);
    let mut entries = Vec::with_capacity(groups.len());
    let mut first_error = None;
    let mut m = ManifestBuilder::new(
        "fit",
        json!({
            "model_type": family,
            "group_by_user": a.group_by_user,
            "restarts": a.restarts,
            "mark_law": law,
            "plot_data": a.emit_plot_data.is_some(),
        }),
    );
    m.input(&a.input)?;
    m.seed(seed, seed_source);
    for ((g, fit), name) in groups.iter().zip(&fits).zip(&names) {
        let n_events = g.total_events();
        match fit {
            Ok(model) => {
                let path = a.out.join(name);
                ModelFile::from_fit(&g.group_key, model, n_events, law).save(&path)?;
                m.output(&path);
                if let Some(dir) = &a.emit_plot_data {
                    write_plot_data(dir, name.trim_end_matches(".json"), model, g)?;
                }
                entries.push(IndexEntry {
                    group: g.group_key.clone(),
                    file: Some(name.clone()),
                    n_cascades: g.len(),
                    n_events,
                    status: String::from(if model.converged { "converged" } else { "not_converged" }),
                    error: None,
                });
            }
            Err(e) => {
                first_error.get_or_insert_with(|| e.clone());
                entries.push(IndexEntry {
                    group: g.group_key.clone(),
                    file: None,
                    n_cascades: g.len(),
                    n_events,
                    status: String::from("failed"),
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let converged = entries.iter().filter(|e| e.status == "converged").count();
    let failed = entries.iter().filter(|e| e.file.is_none()).count();
    let index = ModelIndex {
        schema_version: MODEL_SCHEMA_VERSION,
        model_type: family,
        grouped: a.group_by_user,
        groups: entries,
    };
    let index_path = a.out.join(INDEX_FILE);
    crate::write_json(&index_path, &index)?;
    m.output(&index_path);
    write_manifest(m, start, &a.out, true)?;
    println!(
        "fit {family}: {} groups, {converged} converged, {failed} failed -> {}",
        groups.len(),
        a.out.display()
    );
    match first_error {
        Some(e) if failed == groups.len() => Err(e.into()),
        _ => Ok(()),
    }
}

struct SimJob {
    id: String,
    source: Option<Cascade>,
    run: usize,
    seed: u64,
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let start = Instant::now();
    require_positive(a.n_runs, "--n-runs")?;
    let model = ModelFile::load(&a.model)?.to_fitted()?;
    let (seed, seed_source) = resolve_seed(a.seed);
    let base = SimConfig {
        seed,
        horizon: a.horizon,
        max_events: if a.no_cap { None } else { Some(a.max_events) },
        mark_source: mark_source(&model, a.mark_alpha)?,
    };
    let mut m = ManifestBuilder::new(
        "simulate",
        json!({
            "horizon": a.horizon,
            "n_runs": a.n_runs,
            "max_events": base.max_events,
            "mark_alpha": a.mark_alpha,
            "observe_until": a.observe_until,
            "continue": a.continue_from.is_some(),
        }),
    );
    m.input(&a.model)?;
    m.seed(seed, seed_source);

    let mut jobs = Vec::new();
    match &a.continue_from {
        Some(path) => {
            m.input(path)?;
            let observed = load_cascades_csv(path, model.family.is_marked())?;
            for (k, c) in observed.into_iter().enumerate() {
                let c = match a.observe_until {
                    Some(t) => c.truncated(t.min(c.observation_time()))?,
                    None => c,
                };
                for run in 0..a.n_runs {
                    jobs.push(SimJob {
                        id: format!("{}_run{run}", c.cascade_id),
                        source: Some(c.clone()),
                        run,
                        seed: run_seed(seed, (k * a.n_runs + run) as u64),
                    });
                }
            }
        }
        None => {
            for run in 0..a.n_runs {
                jobs.push(SimJob {
                    id: format!("sim_{run}"),
                    source: None,
                    run,
                    seed: run_seed(seed, run as u64),
                });
            }
        }
    }
    let sims = jobs
        .par_iter()
        .map(|job| {
            let cfg = SimConfig {
                seed: job.seed,
                ..base.clone()
            };
            let mut sim = match &job.source {
                Some(c) => continue_series(model.family, &model.params, c, &cfg)?,
                None => generate_series(model.family, &model.params, &cfg, None)?,
            };
            sim.cascade.cascade_id = job.id.clone();
            Ok(sim)
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let cascades: Vec<Cascade> = sims.iter().map(|s| s.cascade.clone()).collect();
    let flags: Vec<Vec<bool>> = sims.iter().map(|s| s.simulated.clone()).collect();
    write_cascades_csv(&a.out, &cascades, Some(&flags))?;
    let sizes = a.sizes.clone().unwrap_or_else(|| sibling(&a.out, ".sizes.csv"));
    let mut w = csv::Writer::from_writer(crate::create_file(&sizes)?);
    let write_sizes = |w: &mut csv::Writer<std::fs::File>| -> csv::Result<()> {
        w.write_record(["cascade_id", "source_id", "run", "seed", "size", "n_simulated", "truncated"])?;
        for (job, sim) in jobs.iter().zip(&sims) {
            w.write_record([
                job.id.clone(),
                job.source.as_ref().map(|c| c.cascade_id.clone()).unwrap_or_default(),
                job.run.to_string(),
                job.seed.to_string(),
                sim.size().to_string(),
                sim.n_simulated().to_string(),
                sim.truncated.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write_sizes(&mut w).map_err(|e| CliError::from_csv(&sizes, e))?;
    m.output(&a.out);
    m.output(&sizes);
    write_manifest(m, start, &a.out, false)?;
    let mean = sims.iter().map(|s| s.size() as f64).sum::<f64>() / sims.len().max(1) as f64;
    println!("simulate {}: {} runs, mean size {mean:.3}", model.family, sims.len());
    Ok(())
}

#[derive(Default)]
struct PredictionRow {
    cascade_id: String,
    group: String,
    method: String,
    observe_until: f64,
    observed: usize,
    prediction: Option<f64>,
    p10: Option<f64>,
    p90: Option<f64>,
    infectiousness: Option<f64>,
    branching_factor: Option<f64>,
    viral_score: Option<f64>,
    viral_divergent: Option<bool>,
    status: String,
    message: String,
}

impl PredictionRow {
    fn record(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        vec![
            self.cascade_id.clone(),
            self.group.clone(),
            self.method.clone(),
            fmt_f64(self.observe_until),
            self.observed.to_string(),
            opt(self.prediction),
            opt(self.p10),
            opt(self.p90),
            opt(self.infectiousness),
            opt(self.branching_factor),
            opt(self.viral_score),
            self.viral_divergent.map(|b| b.to_string()).unwrap_or_default(),
            self.status.clone(),
            self.message.clone(),
        ]
    }
}

const PREDICTION_HEADER: [&str; 14] = [
    "cascade_id",
    "group",
    "method",
    "observe_until",
    "observed",
    "prediction",
    "p10",
    "p90",
    "infectiousness",
    "branching_factor",
    "viral_score",
    "viral_divergent",
    "status",
    "message",
];

struct PredictContext<'a> {
    models: Option<&'a ModelSet>,
    seismic: Option<reshare_core::SeismicConfig>,
    law: MarkLaw,
    mark_alpha: Option<f64>,
    n_runs: usize,
    max_events: usize,
    seed: u64,
}

fn predict_hawkes(ctx: &PredictContext, file: &ModelFile, seen: &Cascade, t: f64, index: usize, row: &mut PredictionRow) -> Result<(), Error> {
    let model = match file.to_fitted() {
        Ok(m) => m,
        Err(CliError::Core(e)) => return Err(e),
        Err(e) => return Err(Error::Validation(e.to_string())),
    };
    row.method = model.family.code().to_string();
    let n_star = branching_factor_with(&model, ctx.law)?;
    row.branching_factor = Some(n_star);
    match ViralScore::from_branching_factor(n_star) {
        ViralScore::Finite(v) => {
            row.viral_score = Some(v);
            row.viral_divergent = Some(false);
        }
        ViralScore::Divergent => row.viral_divergent = Some(true),
    }
    if model.family.is_hawkesn() {
        let cfg = SimConfig {
            seed: run_seed(ctx.seed, (index * ctx.n_runs) as u64),
            horizon: Horizon::Extinction,
            max_events: Some(ctx.max_events),
            mark_source: mark_source(&model, ctx.mark_alpha).map_err(|e| Error::Validation(e.to_string()))?,
        };
        let est = predict_final_popularity_hawkesn(&model, seen, t, &cfg, ctx.n_runs)?;
        row.prediction = Some(est.mean);
        row.p10 = Some(est.p10);
        row.p90 = Some(est.p90);
    } else {
        row.prediction = Some(predict_final_popularity_with(&model, seen, t, ctx.law)?);
    }
    Ok(())
}

fn predict_one(ctx: &PredictContext, c: &Cascade, t_opt: Option<f64>, index: usize) -> PredictionRow {
    let t = t_opt.map_or(c.observation_time(), |t| t.min(c.observation_time()));
    let group = c.initiator_user_id.clone().unwrap_or_else(|| UNKNOWN_INITIATOR.to_string());
    let mut row = PredictionRow {
        cascade_id: c.cascade_id.clone(),
        group: group.clone(),
        observe_until: t,
        status: String::from("ok"),
        ..PredictionRow::default()
    };
    let seen = match c.truncated(t) {
        Ok(s) => s,
        Err(e) => {
            row.status = String::from("error");
            row.message = e.to_string();
            return row;
        }
    };
    row.observed = seen.len();
    let outcome = if let Some(cfg) = &ctx.seismic {
        row.method = String::from("SEISMIC");
        seismic_predict(cfg, &seen, t).map(|p| {
            row.prediction = Some(p.prediction);
            row.infectiousness = Some(p.infectiousness);
            if p.saturated {
                row.status = String::from("saturated");
            }
        })
    } else {
        match ctx.models.and_then(|s| s.for_group(&group)) {
            Some(file) => predict_hawkes(ctx, file, &seen, t, index, &mut row),
            None => {
                row.status = String::from("no_model");
                row.message = format!("no model for group `{group}`");
                Ok(())
            }
        }
    };
    if let Err(e) = outcome {
        row.status = String::from(match e {
            Error::Supercritical { .. } => "supercritical",
            _ => "error",
        });
        row.message = e.to_string();
    }
    row
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let start = Instant::now();
    require_positive(a.n_runs, "--n-runs")?;
    if let Some(t) = a.observe_until {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("--observe-until must be a non-negative time, got {t}")));
        }
    }
    let models = match &a.model {
        Some(p) => Some(ModelSet::load(p)?),
        None => None,
    };
    let seismic = match &models {
        None => Some(reshare_core::SeismicConfig::default()),
        Some(set) if set.models[0].1.model_type == ModelType::Seismic => Some(set.models[0].1.seismic_config()),
        Some(_) => None,
    };
    if let Some(cfg) = &seismic {
        cfg.validate()?;
    }
    let marked = match (&seismic, &models) {
        (Some(_), _) => true,
        (None, Some(set)) => set.models.iter().any(|(_, m)| m.model_type.is_marked()),
        (None, None) => false,
    };
    let (seed, seed_source) = resolve_seed(a.seed);
    let ctx = PredictContext {
        models: models.as_ref(),
        seismic,
        law: mark_law(a.mark_alpha),
        mark_alpha: a.mark_alpha,
        n_runs: a.n_runs,
        max_events: a.max_events,
        seed,
    };
    let cascades = load_cascades_csv(&a.input, marked)?;
    let rows: Vec<PredictionRow> = cascades
        .par_iter()
        .enumerate()
        .map(|(i, c)| predict_one(&ctx, c, a.observe_until, i))
        .collect();

    let mut w = csv::Writer::from_writer(crate::create_file(&a.out)?);
    let write_rows = |w: &mut csv::Writer<std::fs::File>| -> csv::Result<()> {
        w.write_record(PREDICTION_HEADER)?;
        for r in &rows {
            w.write_record(r.record())?;
        }
        w.flush()?;
        Ok(())
    };
    write_rows(&mut w).map_err(|e| CliError::from_csv(&a.out, e))?;

    let mut m = ManifestBuilder::new(
        "predict",
        json!({
            "seismic": ctx.seismic,
            "observe_until": a.observe_until,
            "n_runs": a.n_runs,
            "max_events": a.max_events,
            "mark_law": ctx.law,
        }),
    );
    for f in models.iter().flat_map(|s| &s.files) {
        m.input(f)?;
    }
    m.input(&a.input)?;
    if ctx.models.is_some_and(|s| s.models.iter().any(|(_, f)| f.model_type.is_hawkesn())) {
        m.seed(seed, seed_source);
    }
    m.output(&a.out);
    write_manifest(m, start, &a.out, false)?;
    let ok = rows.iter().filter(|r| r.prediction.is_some()).count();
    println!("predict: {} cascades, {ok} predicted", rows.len());
    Ok(())
}

/// Groups ranked by cascade count, ties broken by user id; the
/// unknown-initiator group is not a user and is never selected.
pub fn top_k_groups(mut groups: Vec<CascadeGroup>, k: usize) -> Vec<CascadeGroup> {
    groups.retain(|g| g.group_key != UNKNOWN_INITIATOR);
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| compare_ids(&a.group_key, &b.group_key)));
    groups.truncate(k);
    groups
}

pub fn cmd_features(a: &FeaturesArgs) -> Result<()> {
    let start = Instant::now();
    let family = a.model_type;
    if !family.is_hawkes() {
        return Err(CliError::Usage(String::from("features need a parametric model type")));
    }
    require_positive(a.restarts, "--restarts")?;
    let k = match a.top_k_users {
        Some(k) if k <= 0 => return Err(CliError::Usage(format!("--top-k-users must be positive, got {k}"))),
        Some(k) => Some(k as usize),
        None => None,
    };
    let cascades = load_cascades_csv(&a.input, family.is_marked())?;
    let mut groups = group_by_initiator(cascades);
    if let Some(k) = k {
        groups = top_k_groups(groups, k);
    }
    let (seed, seed_source) = resolve_seed(a.seed);
    let config = FeatureConfig {
        fit: FitConfig {
            n_restarts: a.restarts,
            ..FitConfig::default().with_seed(seed)
        },
        mark_law: mark_law(a.mark_alpha),
    };
    let rows = groups
        .par_iter()
        .map(|g| user_features(g, family, &config))
        .collect::<Result<Vec<_>, Error>>()?;
    let table = FeatureTable::from_rows(family, rows)?;
    write_features_csv(&a.out, &table)?;

    let mut m = ManifestBuilder::new(
        "features",
        json!({
            "model_type": family,
            "top_k_users": k,
            "restarts": a.restarts,
            "mark_law": config.mark_law,
            "feature_schema": FEATURE_SCHEMA_VERSION,
        }),
    );
    m.input(&a.input)?;
    m.seed(seed, seed_source);
    m.output(&a.out);
    write_manifest(m, start, &a.out, false)?;
    println!("features {family}: {} users -> {}", table.rows.len(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_file::MODEL_SCHEMA_VERSION;
    use std::cmp::Ordering;

    #[test]
    fn version_names_schemas() {
        assert!(VERSION.contains(&format!("model schema {MODEL_SCHEMA_VERSION}")));
        assert!(VERSION.contains(&format!("feature schema {FEATURE_SCHEMA_VERSION}")));
    }

    #[test]
    fn config_lines() {
        let args = config_args("# run\nseed = 7\nmodel_type=EXP\ngroup-by-user=true\nno_cap=false\n", "cfg").unwrap();
        assert_eq!(args, ["--seed", "7", "--model-type", "EXP", "--group-by-user"]);
        assert!(config_args("seed 7\n", "cfg").is_err());
    }

    #[test]
    fn config_is_spliced_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "seed=3\nrestarts=2\n").unwrap();
        let args: Vec<OsString> = ["reshare", "--config", cfg.to_str().unwrap(), "fit", "--seed", "9"]
            .iter()
            .map(OsString::from)
            .collect();
        let out: Vec<String> = expand_config(args)
            .unwrap()
            .into_iter()
            .map(|a| a.into_string().unwrap())
            .collect();
        assert_eq!(out, ["reshare", "fit", "--seed", "3", "--restarts", "2", "--seed", "9"]);
        let cli = Cli::try_parse_from(["reshare", "fit", "-i", "x", "--model-type", "EXP", "-o", "o", "--seed", "3", "--seed", "9"])
            .unwrap();
        match cli.command {
            Command::Fit(f) => assert_eq!(f.seed, Some(9)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn horizons_and_model_codes() {
        assert_eq!(parse_horizon("extinction").unwrap(), Horizon::Extinction);
        assert_eq!(parse_horizon("3600").unwrap(), Horizon::Until(3600.0));
        assert!(parse_horizon("-1").is_err());
        let e = parse_model_type("XYZ").unwrap_err();
        assert!(e.contains("EXP") && e.contains("mPL"), "{e}");
    }

    #[test]
    fn top_k_ties_by_user_id() {
        let g = |key: &str, n: usize| {
            let cs = (0..n)
                .map(|i| Cascade::from_times(format!("{key}-{i}"), &[0.0], 0.0).unwrap())
                .collect();
            CascadeGroup::new(key, cs).unwrap()
        };
        let groups = vec![g("u10", 2), g("u2", 3), g("9", 2), g("10", 2), g(UNKNOWN_INITIATOR, 9)];
        let keys: Vec<String> = top_k_groups(groups, 3).into_iter().map(|g| g.group_key).collect();
        assert_eq!(keys, ["u2", "9", "10"]);
        let groups = vec![g("u10", 2), g("u9", 2), g("10", 2)];
        let keys: Vec<String> = top_k_groups(groups, 2).into_iter().map(|g| g.group_key).collect();
        assert_eq!(keys, ["10", "u10"]);
    }

    #[test]
    fn id_ordering() {
        assert_eq!(compare_ids("9", "10"), Ordering::Less);
        assert_eq!(compare_ids("b", "aa"), Ordering::Greater);
        let mut ids = vec!["1a", "10", "9", "b", "007"];
        ids.sort_by(|a, b| compare_ids(a, b));
        assert_eq!(ids, ["007", "9", "10", "1a", "b"]);
    }
}
