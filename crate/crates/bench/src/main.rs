//! `autows` command-line tool.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use autows::eval::{default_tau_grid, performance_profile, write_curves, ObjectiveKind, ObjectiveTable};
use autows::goggles::ClusterMethod;
use autows::iws::{self, SessionMode, SessionState};
use autows::label_model::{FillPolicy, LabelModelKind};
use autows::synthetic::{self, BlobSpec, InteractionSpec};
use autows::{load_bundle_with, LoadOptions, Manifest};
use autows_bench::config::RunConfig;
use autows_bench::profile::{merge_tables, table_from_reports};
use autows_bench::run::{read_report, resolve_provenance};
use autows_bench::serve::{self, AppState, TOKEN_ENV};
use autows_bench::sweep::{sweep, SweepConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "autows", version, about = "Automated weak supervision benchmark driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest, or generate a synthetic dataset.
    Ingest(IngestArgs),
    /// Run one method on one dataset.
    Run(RunArgs),
    /// Run a sweep described by a JSON file.
    Sweep {
        config: PathBuf,
        /// Where tables go; defaults to the base config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute performance profiles from objective tables or run directories.
    Profile {
        /// Objective table CSVs.
        #[arg(long = "table")]
        tables: Vec<PathBuf>,
        /// Run directories (each with a report.json).
        #[arg(long = "run")]
        runs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "error")]
        objective: Objective,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "profile")]
        stem: String,
    },
    /// Serve interactive vetting sessions over HTTP.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Static UI bundle served at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Rebuild a session's LF set from its verdict log.
    Replay {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        log: PathBuf,
        /// Output LF set JSON.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Error,
    Coverage,
}

#[derive(Clone, Copy, ValueEnum)]
enum Synthetic {
    Blobs,
    Interaction,
}

#[derive(Args)]
struct IngestArgs {
    /// Manifest to validate.
    #[arg(long, conflicts_with = "synthetic")]
    manifest: Option<PathBuf>,
    /// Derived provenances to check, e.g. `raw+pca32`.
    #[arg(long = "derive")]
    derive: Vec<String>,
    #[arg(long, value_enum, requires = "out")]
    synthetic: Option<Synthetic>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 100)]
    n_val: usize,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a noisy logits view of this width.
    #[arg(long)]
    logits: Option<usize>,
}

/// RunConfig fields as flags; flags override a `--config` file.
#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    provenance: Option<String>,
    #[arg(long = "extra-provenance")]
    extra_provenances: Vec<String>,
    /// `majority` or `dawid_skene`.
    #[arg(long)]
    label_model: Option<String>,
    #[arg(long)]
    cardinality: Option<usize>,
    #[arg(long)]
    max_candidates: Option<usize>,
    #[arg(long)]
    iws_threshold: Option<f64>,
    #[arg(long)]
    min_pool: Option<usize>,
    #[arg(long)]
    verdict_log: Option<PathBuf>,
    /// `gmm`, `kmeans` or `spectral`.
    #[arg(long)]
    goggles_method: Option<String>,
    /// `none`, `prior_sample` or `majority_class`.
    #[arg(long)]
    fill_policy: Option<String>,
    #[arg(long)]
    label_budget: Option<usize>,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    no_external_votes: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn parse_enum<T: DeserializeOwned>(what: &str, s: &str) -> anyhow::Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).with_context(|| format!("unknown {what} `{s}`"))
}

impl RunArgs {
    fn to_config(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.manifest {
            c.manifest = v.clone();
        }
        if let Some(v) = &self.method {
            c.method = v.parse()?;
        }
        if let Some(v) = &self.provenance {
            c.provenance = Some(v.clone());
        }
        if !self.extra_provenances.is_empty() {
            c.extra_provenances = self.extra_provenances.clone();
        }
        if let Some(v) = &self.label_model {
            c.label_model = parse_enum::<LabelModelKind>("label model", v)?;
        }
        if let Some(v) = self.cardinality {
            c.synthesis.cardinality = v;
        }
        if let Some(v) = self.max_candidates {
            c.synthesis.max_candidates = v;
        }
        if let Some(v) = self.iws_threshold {
            c.iws_threshold = Some(v);
        }
        if let Some(v) = self.min_pool {
            c.min_pool = v;
        }
        if let Some(v) = &self.verdict_log {
            c.verdict_log = Some(v.clone());
        }
        if let Some(v) = &self.goggles_method {
            c.goggles_method = parse_enum::<ClusterMethod>("clustering method", v)?;
        }
        if let Some(v) = &self.fill_policy {
            c.fill_policy = parse_enum::<FillPolicy>("fill policy", v)?;
        }
        if let Some(v) = self.label_budget {
            c.label_budget = Some(v);
        }
        c.standardize |= self.standardize;
        if self.no_external_votes {
            c.use_external_votes = false;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        Ok(c)
    }
}

const EXIT_NA: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Ingest(args) => ingest(args),
        Command::Run(args) => {
            let outcome = autows_bench::run(&args.to_config()?)?;
            println!("{}", serde_json::to_string_pretty(&outcome.report)?);
            eprintln!(
                "{} in {:.2?} -> {}",
                if outcome.cached { "cached" } else { "ran" },
                outcome.elapsed,
                outcome.dir.display()
            );
            Ok(if outcome.report.is_na() { EXIT_NA } else { 0 })
        }
        Command::Sweep { config, out } => {
            let config = SweepConfig::read(&config)?;
            let result = sweep(&config)?;
            let dir = out.unwrap_or_else(|| config.base.output_dir.join("sweeps"));
            for p in result.write(&dir)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Profile {
            tables,
            runs,
            objective,
            out,
            stem,
        } => profile(&tables, &runs, objective, &out, &stem),
        Command::Serve { run, addr, ui } => {
            let config = run.to_config()?;
            let token = std::env::var(TOKEN_ENV).ok();
            let app = Arc::new(AppState::new(&config, token)?);
            log::info!("candidate pool of {}", app.pool_size());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve::serve(app, addr, ui))?;
            Ok(0)
        }
        Command::Replay { run, log, out } => {
            let config = run.to_config()?;
            let manifest = Manifest::read(&config.manifest)?;
            let Some(provenance) = resolve_provenance(&config, &manifest) else {
                bail!("manifest lacks the requested provenance");
            };
            let bundle = autows_bench::run::load(&config, &provenance)?;
            let pool = iws::build_pool(&bundle, &config.canonical().synthesis, config.min_pool)?;
            let threshold = config
                .iws_threshold
                .unwrap_or_else(|| iws::default_threshold(bundle.classes()));
            let session = SessionState::new(pool, &bundle, SessionMode::Interactive, threshold)?;
            let text = fs::read_to_string(&log).with_context(|| log.display().to_string())?;
            let selection = iws::replay(session, &iws::parse_verdict_log(&text)?)?;
            selection.lfset.write(&out)?;
            println!("{} LFs ({:?}) -> {}", selection.lfset.len(), selection.status, out.display());
            Ok(0)
        }
    }
}

fn ingest(args: IngestArgs) -> anyhow::Result<u8> {
    if let Some(kind) = args.synthetic {
        let out = args.out.expect("required by clap");
        let bundle = match kind {
            Synthetic::Blobs => synthetic::blobs(&BlobSpec {
                n_train: args.n_train,
                n_val: args.n_val,
                dim: args.dim,
                classes: args.classes,
                seed: args.seed,
                ..Default::default()
            })?,
            Synthetic::Interaction => synthetic::interaction(&InteractionSpec {
                n_train: args.n_train,
                n_val: args.n_val,
                dim: args.dim,
                seed: args.seed,
                ..Default::default()
            })?,
        };
        let path = synthetic::write_bundle(&bundle, &out)?;
        if let Some(width) = args.logits {
            let gold = bundle.train_labels.as_ref().expect("synthetic data is labeled").values();
            let train = synthetic::logits_view(gold, width, 3.0, args.seed);
            let val = synthetic::logits_view(bundle.val_labels.values(), width, 3.0, args.seed ^ 1);
            synthetic::add_view(&path, "external:clip_logits", &train, &val, None)?;
        }
        println!("{}", path.display());
        return Ok(0);
    }
    let Some(path) = args.manifest else {
        bail!("give --manifest or --synthetic");
    };
    let manifest = Manifest::read(&path)?;
    let provenances: Vec<String> = manifest.train.features.keys().cloned().chain(args.derive).collect();
    for p in provenances {
        let b = load_bundle_with(
            &path,
            &LoadOptions {
                provenance: Some(p.clone()),
                standardize: false,
            },
        )?;
        println!(
            "{p}: train {}x{}, {} labeled, {} classes{}",
            b.train_features.rows(),
            b.dim(),
            b.val_labels.len(),
            b.classes(),
            if b.external_votes.is_some() { ", external votes" } else { "" }
        );
    }
    Ok(0)
}

fn profile(tables: &[PathBuf], runs: &[PathBuf], objective: Objective, out: &Path, stem: &str) -> anyhow::Result<u8> {
    let kind = match objective {
        Objective::Error => ObjectiveKind::ClassificationError,
        Objective::Coverage => ObjectiveKind::OneMinusCoverage,
    };
    let mut all = Vec::new();
    for t in tables {
        let text = fs::read_to_string(t).with_context(|| t.display().to_string())?;
        all.push(ObjectiveTable::from_csv(&text)?);
    }
    if !runs.is_empty() {
        let reports = runs.iter().map(|d| read_report(d)).collect::<Result<Vec<_>, _>>()?;
        all.push(table_from_reports(&reports, kind)?);
    }
    if all.is_empty() {
        bail!("give at least one --table or --run");
    }
    let table = merge_tables(&all)?;
    let curves = performance_profile(&table, &default_tau_grid())?;
    fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    fs::write(out.join(format!("{stem}_table.csv")), table.to_csv())?;
    write_curves(out, stem, &curves)?;
    for c in &curves {
        println!("{}: rho(inf) = {:.3}", c.method, c.rho_at_infinity);
    }
    Ok(0)
}
