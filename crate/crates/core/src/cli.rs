//! The `influence-ode` command line.
//!
//! ```text
//! influence-ode <synth|simulate|fit|report> --config <json> --out <dir>
//!               [--seed N] [--series f.csv] [--network f.json] [--weights f.json] [--fit f.json]
//! ```
//!
//! | command    | reads                                   | writes |
//! |------------|-----------------------------------------|--------|
//! | `synth`    | config                                  | `series.csv`, `network.json`, `true_weights.json` |
//! | `simulate` | config, network, weights, series        | `series.csv` |
//! | `fit`      | config, network, series                 | `fit_report.json` |
//! | `report`   | config, fit report, series, [weights]   | `cohort.json`, `summary.csv`, `kernels.csv`, [`recovery.json`] |
//!
//! Every command also writes `<command>_manifest.json`. JSON outputs embed
//! the same manifest under `meta`; the manifest file covers the CSVs.
//!
//! Exit codes: 0 success, 2 unreadable or invalid input, 3 ids that do not
//! line up across inputs, 4 numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    simulate, InfluenceNetwork, InfluenceWeights, Opinion, OpinionSeries, SimulationOptions, UserId,
};
use crate::error::{Error, Result};
use crate::identify::{fit_cohort, CohortSummary, FitDiagnostics, FitFailure};
use crate::io::{
    read_json, read_network, read_series_file, read_weights, to_json_with_meta, write_series, WeightsDocument,
};
use crate::kernelize::{forward_fill, LeadingGap};
use crate::synth::{evaluate_recovery, gen_dataset, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CROSS_REFERENCE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Parser)]
#[command(
    name = "influence-ode",
    version,
    about = "Fit and simulate linear social influence models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with known weights.
    Synth(Args),
    /// Run the dynamics forward from the kernel-0 opinions of a series.
    Simulate(Args),
    /// Fit every recipient's regression.
    Fit(Args),
    /// Summarize a fit report, optionally against true weights.
    Report(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if needed.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Fit report, for `report`.
    #[arg(long)]
    fit: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Synth,
    Simulate,
    Fit,
    Report,
}

impl CommandKind {
    fn name(self) -> &'static str {
        match self {
            CommandKind::Synth => "synth",
            CommandKind::Simulate => "simulate",
            CommandKind::Fit => "fit",
            CommandKind::Report => "report",
        }
    }
}

/// Provenance attached to every output. Contains nothing run-specific
/// beyond its inputs, so reruns are byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: CommandKind,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
    pub version: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub steps: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Drive pure influencers with their recorded series instead of holding
    /// them at their kernel-0 opinion.
    pub replay_pure_influencers: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            steps: 69,
            noise_sigma: 0.0,
            seed: 0,
            replay_pure_influencers: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Series length; inferred from the largest kernel index when absent.
    pub num_kernels: Option<usize>,
    /// Forward-fill gaps (leading gaps are backfilled) before fitting.
    pub forward_fill: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            num_kernels: None,
            forward_fill: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub num_kernels: Option<usize>,
}

/// Body of `fit_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub models: Vec<FitDiagnostics>,
    pub failures: Vec<FitFailure>,
    pub summary: CohortSummary,
}

/// Body of `cohort.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub summary: CohortSummary,
    pub failed_models: usize,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingUser(_)
        | Error::MissingSeries { .. }
        | Error::DanglingInfluencer { .. }
        | Error::LengthMismatch { .. }
        | Error::IdMismatch(_) => EXIT_CROSS_REFERENCE,
        Error::SeriesTooShort(..)
        | Error::AllMissing(_)
        | Error::Unfilled(_)
        | Error::NonFinite(_)
        | Error::Domain(_) => EXIT_NUMERIC,
        Error::Config(_) | Error::Network(_) | Error::Parse { .. } | Error::Io(_) => EXIT_INPUT,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let (kind, args) = match cli.command {
        Command::Synth(a) => (CommandKind::Synth, a),
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::Fit(a) => (CommandKind::Fit, a),
        Command::Report(a) => (CommandKind::Report, a),
    };
    let result = match kind {
        CommandKind::Synth => cmd_synth(&args),
        CommandKind::Simulate => cmd_simulate(&args),
        CommandKind::Fit => cmd_fit(&args),
        CommandKind::Report => cmd_report(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("influence-ode {}: {e}", kind.name());
            exit_code(&e)
        }
    }
}

/// Attaches the path to bare I/O errors so the message says which file.
fn at_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::parse(path.display().to_string(), io),
        other => other,
    })
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => at_path(p, read_json(p)),
        None => Ok(T::default()),
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str, kind: CommandKind) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("`{}` needs --{flag}", kind.name())))
}

struct Output {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Output {
    fn new<C: Serialize>(
        kind: CommandKind,
        args: &Args,
        config: &C,
        seed: Option<u64>,
        files: &[&str],
    ) -> Result<Self> {
        let mut inputs = BTreeMap::new();
        let named = [
            ("config", &args.config),
            ("series", &args.series),
            ("network", &args.network),
            ("weights", &args.weights),
            ("fit", &args.fit),
        ];
        for (role, path) in named {
            if let Some(p) = path {
                inputs.insert(role.to_owned(), p.display().to_string());
            }
        }
        let manifest_file = format!("{}_manifest.json", kind.name());
        let mut outputs: Vec<String> = files.iter().map(|f| f.to_string()).collect();
        outputs.push(manifest_file);
        let manifest = RunManifest {
            command: kind,
            inputs,
            outputs,
            config: serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed,
        };
        fs::create_dir_all(&args.out)?;
        Ok(Output {
            dir: args.out.clone(),
            manifest,
        })
    }

    fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<()> {
        fs::write(self.dir.join(name), to_json_with_meta(&self.manifest, body)?)?;
        Ok(())
    }

    fn series(&self, name: &str, series: &BTreeMap<UserId, OpinionSeries>) -> Result<()> {
        let mut buf = Vec::new();
        write_series(&mut buf, series)?;
        fs::write(self.dir.join(name), buf)?;
        Ok(())
    }

    fn text(&self, name: &str, body: String) -> Result<()> {
        fs::write(self.dir.join(name), body)?;
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        let name = format!("{}_manifest.json", self.manifest.command.name());
        let sorted = serde_json::to_value(&self.manifest).map_err(|e| Error::Config(e.to_string()))?;
        let mut text = serde_json::to_string_pretty(&sorted).map_err(|e| Error::Config(e.to_string()))?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }
}

fn cmd_synth(args: &Args) -> Result<i32> {
    let mut config: SynthConfig = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let data = gen_dataset(&config)?;
    let out = Output::new(
        CommandKind::Synth,
        args,
        &config,
        Some(config.seed),
        &["series.csv", "network.json", "true_weights.json"],
    )?;
    out.series("series.csv", &data.series)?;
    out.json("network.json", &data.network)?;
    out.json("true_weights.json", &WeightsDocument::from_map(&data.true_weights))?;
    out.finish()?;
    Ok(EXIT_OK)
}

fn check_weights_match(network: &InfluenceNetwork, weights: &BTreeMap<UserId, InfluenceWeights>) -> Result<()> {
    for r in network.recipients() {
        let w = weights
            .get(&r.id)
            .ok_or_else(|| Error::IdMismatch(format!("no weights for recipient `{}`", r.id)))?;
        for j in &r.influencers {
            if w.weight_of(j).is_none() {
                return Err(Error::IdMismatch(format!(
                    "no weight for influencer `{j}` of `{}`",
                    r.id
                )));
            }
        }
        if w.influence.len() != r.influencers.len() {
            return Err(Error::IdMismatch(format!(
                "weights for `{}` name influencers outside the network",
                r.id
            )));
        }
    }
    if let Some(extra) = weights.keys().find(|k| network.get(k).is_none()) {
        return Err(Error::IdMismatch(format!(
            "weights for `{extra}`, which is not a recipient"
        )));
    }
    Ok(())
}

fn cmd_simulate(args: &Args) -> Result<i32> {
    let kind = CommandKind::Simulate;
    let mut config: SimulateConfig = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let network_path = require(&args.network, "network", kind)?;
    let weights_path = require(&args.weights, "weights", kind)?;
    let series_path = require(&args.series, "series", kind)?;
    let network = at_path(network_path, read_network(network_path))?;
    let weights = at_path(weights_path, read_weights(weights_path))?;
    let recorded = at_path(series_path, read_series_file(series_path, None))?;
    check_weights_match(&network, &weights)?;

    let mut initial = BTreeMap::new();
    for id in network.users() {
        let s = recorded.get(id).ok_or_else(|| Error::MissingUser(id.to_owned()))?;
        let x0 = s.get(0).ok_or_else(|| Error::MissingUser(id.to_owned()))?;
        initial.insert(id.to_owned(), Opinion::new(x0)?);
    }
    let mut scripted = BTreeMap::new();
    if config.replay_pure_influencers {
        for id in network.pure_influencers() {
            let s = &recorded[id];
            let path: Option<Vec<f64>> = (0..=config.steps).map(|t| s.get(t)).collect();
            let path = path.ok_or_else(|| Error::LengthMismatch {
                user: id.to_owned(),
                expected: config.steps + 1,
                found: s.observed_count(),
            })?;
            scripted.insert(id.to_owned(), path);
        }
    }
    let opts = SimulationOptions {
        steps: config.steps,
        noise_sigma: config.noise_sigma,
        seed: config.seed,
        scripted,
    };
    let series = simulate(&network, &weights, &initial, &opts)?;

    let out = Output::new(kind, args, &config, Some(config.seed), &["series.csv"])?;
    out.series("series.csv", &series)?;
    out.finish()?;
    Ok(EXIT_OK)
}

fn check_series_cover(network: &InfluenceNetwork, series: &BTreeMap<UserId, OpinionSeries>) -> Result<()> {
    for r in network.recipients() {
        for id in std::iter::once(&r.id).chain(&r.influencers) {
            if !series.contains_key(id) {
                return Err(Error::MissingSeries {
                    recipient: r.id.clone(),
                    user: id.clone(),
                });
            }
        }
    }
    Ok(())
}

fn cmd_fit(args: &Args) -> Result<i32> {
    let kind = CommandKind::Fit;
    let config: FitConfig = load_config(args.config.as_deref())?;
    let network_path = require(&args.network, "network", kind)?;
    let series_path = require(&args.series, "series", kind)?;
    let network = at_path(network_path, read_network(network_path))?;
    let mut series = at_path(series_path, read_series_file(series_path, config.num_kernels))?;
    check_series_cover(&network, &series)?;
    if config.forward_fill {
        for id in network.users() {
            let filled = forward_fill(&series[id], LeadingGap::Backfill)?;
            series.insert(id.to_owned(), filled);
        }
    }

    let cohort = fit_cohort(&network, &series);
    let report = FitReport {
        models: cohort.fits,
        failures: cohort.failures,
        summary: cohort.summary,
    };
    let out = Output::new(kind, args, &config, args.seed, &["fit_report.json"])?;
    out.json("fit_report.json", &report)?;
    out.finish()?;
    for f in &report.failures {
        eprintln!("influence-ode fit: recipient `{}` not fitted: {}", f.recipient, f.error);
    }
    Ok(if report.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_NUMERIC
    })
}

/// Plot-ready tables: one row per observed opinion, and per-kernel counts
/// and means.
fn summary_tables(series: &BTreeMap<UserId, OpinionSeries>) -> (String, String) {
    let len = series.values().map(OpinionSeries::len).max().unwrap_or(0);
    let mut rows = String::from("kernel,user,opinion\n");
    let mut kernels = String::from("kernel,observed_users,mean_opinion\n");
    for t in 0..len {
        let mut seen = Vec::new();
        for (id, s) in series {
            if let Some(v) = s.get(t) {
                rows.push_str(&format!("{t},{id},{v}\n"));
                seen.push(v);
            }
        }
        let mean = if seen.is_empty() {
            String::new()
        } else {
            (seen.iter().sum::<f64>() / seen.len() as f64).to_string()
        };
        kernels.push_str(&format!("{t},{},{mean}\n", seen.len()));
    }
    (rows, kernels)
}

fn cmd_report(args: &Args) -> Result<i32> {
    let kind = CommandKind::Report;
    let config: ReportConfig = load_config(args.config.as_deref())?;
    let fit_path = require(&args.fit, "fit", kind)?;
    let series_path = require(&args.series, "series", kind)?;
    let fit: FitReport = at_path(fit_path, read_json(fit_path))?;
    let series = at_path(series_path, read_series_file(series_path, config.num_kernels))?;
    let truth = match &args.weights {
        Some(p) => Some(at_path(p, read_weights(p))?),
        None => None,
    };

    let cohort = CohortReport {
        summary: CohortSummary::from_fits(&fit.models),
        failed_models: fit.failures.len(),
    };
    let recovery = match &truth {
        Some(t) => {
            let fitted: BTreeMap<UserId, InfluenceWeights> =
                fit.models.iter().map(|m| (m.recipient.clone(), m.weights())).collect();
            Some(evaluate_recovery(t, &fitted)?)
        }
        None => None,
    };

    let mut files = vec!["cohort.json", "summary.csv", "kernels.csv"];
    if recovery.is_some() {
        files.push("recovery.json");
    }
    let out = Output::new(kind, args, &config, args.seed, &files)?;
    out.json("cohort.json", &cohort)?;
    let (rows, kernels) = summary_tables(&series);
    out.text("summary.csv", rows)?;
    out.text("kernels.csv", kernels)?;
    if let Some(r) = &recovery {
        out.json("recovery.json", r)?;
    }
    out.finish()?;
    Ok(EXIT_OK)
}
