use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tafs_cli::{check_paths, load_config, CliError, Overrides};
use tafs_core::bench::fixture::{full_statistics_manifest, write_fixture, FixtureSpec};
use tafs_core::bench::report::{emit_csv, emit_report, load_raw, reaggregate, summary_json};
use tafs_core::bench::validate::stats_json;
use tafs_core::bench::{run_benchmark, validate_manifest, BenchError, BenchOptions, Manifest, ManifestError};
use tafs_core::cloudio::read_cloud;
use tafs_core::cloudstore::ingest_dir;
use tafs_core::config::{BackendKind, Config};
use tafs_core::model::{default_bundle, ModelDims};
use tafs_core::pipeline::{Engine, EngineError, QueryInput};
use tafs_core::util::sha256_hex;
use tafs_core::vlm::ImageInput;

#[derive(Parser)]
#[command(name = "tafs", version, about = "Language-guided 3D affordance segmentation")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a store index from `clouds/` and `maps/` under a directory.
    Ingest {
        dir: PathBuf,
        /// Label override, `cloud_id=label` (repeatable).
        #[arg(long = "label", value_parser = parse_pair)]
        labels: Vec<(String, String)>,
    },
    /// Validate a manifest and print its statistics.
    Validate { manifest: PathBuf },
    /// Run the benchmark and write report files.
    Bench {
        manifest: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
        /// Report directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run one query and print the result.
    Query {
        /// Manifest image id, or a path to an image file.
        image: String,
        text: String,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Observed object cloud (.afpc or .xyz) to register.
        #[arg(long)]
        cloud: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        cors_origin: Option<String>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Rebuild report files from a raw report.
    ExportReport {
        raw: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Directory for CSV files; defaults to the raw report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a small synthetic dataset (manifest, images, store).
    SynthFixture {
        dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        scenes: usize,
        #[arg(long, default_value_t = 3)]
        images_per_scene: usize,
        #[arg(long, default_value_t = 256)]
        points: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Write only a manifest with the full-scale dataset statistics.
        #[arg(long)]
        full_statistics: bool,
    },
    /// Generate a seeded weight bundle.
    GenWeights {
        out: PathBuf,
        /// Sizes the text embedding from this manifest's vocabulary.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        heads: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Default)]
struct EngineArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    remote_url: Option<String>,
    #[arg(long)]
    remote_timeout: Option<f64>,
    /// Confidence threshold for proceeding.
    #[arg(long)]
    threshold: Option<f64>,
    /// Weight-bundle seed when no weights file is given.
    #[arg(long)]
    seed: Option<u64>,
    /// neural, oracle or noisy.
    #[arg(long)]
    segmentation: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
}

impl EngineArgs {
    fn overrides(self) -> Overrides {
        Overrides {
            store: self.store,
            weights: self.weights,
            backend: self.backend,
            remote_url: self.remote_url,
            remote_timeout_secs: self.remote_timeout,
            confidence_threshold: self.threshold,
            seed: self.seed,
            segmentation: self.segmentation,
            sigma: self.sigma,
            noise_seed: self.noise_seed,
            ..Overrides::default()
        }
    }
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(|| format!("expected id=label, got '{s}'"))
}

fn infra(e: impl std::fmt::Display) -> CliError {
    CliError::infra(e.to_string())
}

fn manifest_error(e: ManifestError) -> CliError {
    match e {
        ManifestError::Io { .. } => CliError::infra(e.to_string()),
        _ => CliError::validation(e.to_string()),
    }
}

fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::Manifest(m) => manifest_error(m),
        EngineError::Invalid(v) => CliError::validation("manifest is invalid")
            .with_detail(serde_json::to_value(&v).expect("errors serialize")),
        other => infra(other),
    }
}

fn build_config(file: Option<&Path>, o: Overrides) -> Result<Config, CliError> {
    let c = o.apply(load_config(file)?)?;
    check_paths(&c)?;
    Ok(c)
}

fn load_engine(c: &Config) -> Result<Engine, CliError> {
    if c.manifest.is_none() {
        return Err(CliError::infra("no manifest given (argument or config)"));
    }
    Engine::load(c).map_err(engine_error)
}

fn run(cli: Cli) -> Result<Value, CliError> {
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Ingest { dir, labels } => {
            let labels: BTreeMap<String, String> = labels.into_iter().collect();
            let index = ingest_dir(&dir, &labels).map_err(infra)?;
            Ok(json!({
                "store": dir,
                "clouds": index.len(),
                "labels": index.labels().collect::<Vec<_>>(),
            }))
        }
        Command::Validate { manifest } => {
            let m = Manifest::load(&manifest).map_err(manifest_error)?;
            match validate_manifest(&m) {
                Ok(stats) => Ok(serde_json::from_str(&stats_json(&stats)).expect("stats are json")),
                Err(errs) => Err(CliError::validation(format!("{} validation error(s)", errs.errors.len()))
                    .with_detail(serde_json::to_value(&errs).expect("errors serialize"))),
            }
        }
        Command::Bench {
            manifest,
            engine,
            out,
            threads,
        } => {
            let o = Overrides {
                manifest,
                output_dir: out,
                threads,
                ..engine.overrides()
            };
            let c = build_config(cfg, o)?;
            let engine = load_engine(&c)?;
            let report = run_benchmark(&engine, &BenchOptions::from_config(&c)).map_err(|e| match e {
                BenchError::Infrastructure { .. } | BenchError::ThreadPool(_) => infra(e),
            })?;
            let dir = c.output_dir.clone().unwrap_or_else(|| PathBuf::from("reports"));
            let files = emit_report(&report, &dir).map_err(infra)?;
            log::info!("wrote {} report files to {}", files.len(), dir.display());
            Ok(json!({
                "output_dir": dir,
                "files": files,
                "config_hash": report.config_hash,
                "method": report.method,
                "overall": report.overall,
            }))
        }
        Command::Query {
            image,
            text,
            manifest,
            cloud,
            engine,
        } => {
            let c = build_config(cfg, Overrides { manifest, ..engine.overrides() })?;
            let engine = load_engine(&c)?;
            let image = if engine.manifest().image(&image).is_some() {
                engine.image_input(&image).map_err(infra)?
            } else if Path::new(&image).is_file() {
                let bytes = fs::read(&image).map_err(|e| CliError::infra(format!("{image}: {e}")))?;
                ImageInput {
                    image_id: None,
                    bytes: Some(Arc::new(bytes)),
                }
            } else {
                return Err(CliError::validation(format!("'{image}' is neither a manifest image nor a file")));
            };
            let query_cloud = match cloud {
                Some(p) => Some(read_cloud(&p).map_err(infra)?),
                None => None,
            };
            let result = engine
                .run(&QueryInput {
                    image,
                    text,
                    query_cloud,
                })
                .map_err(infra)?;
            Ok(serde_json::to_value(&result).expect("result serializes"))
        }
        Command::Serve {
            manifest,
            host,
            port,
            cors_origin,
            engine,
        } => {
            let c = build_config(
                cfg,
                Overrides {
                    manifest,
                    cors_origin,
                    ..engine.overrides()
                },
            )?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| CliError::infra(format!("address {host}:{port}: {e}")))?;
            let state = if c.manifest.is_some() {
                let engine = load_engine(&c)?;
                tafs_service::AppState::with_engine(c, engine)
            } else {
                log::warn!("no manifest configured; serving empty until /v1/admin/reload");
                tafs_service::AppState::empty(c)
            };
            let rt = tokio::runtime::Runtime::new().map_err(infra)?;
            rt.block_on(tafs_service::serve(Arc::new(state), addr)).map_err(infra)?;
            Ok(json!({ "stopped": true }))
        }
        Command::ExportReport { raw, format, out } => {
            let report = reaggregate(&load_raw(&raw).map_err(infra)?);
            match format {
                Format::Json => Ok(serde_json::from_str(&summary_json(&report)).expect("summary is json")),
                Format::Csv => {
                    let dir = out.unwrap_or_else(|| raw.parent().unwrap_or(Path::new(".")).to_path_buf());
                    let files = emit_csv(&report, &dir).map_err(infra)?;
                    Ok(json!({ "files": files }))
                }
            }
        }
        Command::SynthFixture {
            dir,
            scenes,
            images_per_scene,
            points,
            seed,
            full_statistics,
        } => {
            if full_statistics {
                let path = dir.join("manifest.json");
                fs::create_dir_all(&dir).map_err(infra)?;
                full_statistics_manifest().save(&path).map_err(infra)?;
                return Ok(json!({ "manifest": path }));
            }
            let spec = FixtureSpec {
                scenes,
                images_per_scene,
                points_per_cloud: points,
                seed,
            };
            let p = write_fixture(&dir, &spec).map_err(infra)?;
            Ok(json!({ "root": p.root, "manifest": p.manifest, "store": p.store }))
        }
        Command::GenWeights {
            out,
            manifest,
            seed,
            d,
            heads,
            layers,
        } => {
            let c = build_config(
                cfg,
                Overrides {
                    manifest,
                    seed,
                    ..Overrides::default()
                },
            )?;
            let base = ModelDims::default();
            let vocab_size = match &c.manifest {
                Some(p) => Manifest::load(p).map_err(manifest_error)?.tokenizer().len(),
                None => base.vocab_size,
            };
            let dims = ModelDims {
                d: d.unwrap_or(base.d),
                heads: heads.unwrap_or(base.heads),
                layers: layers.unwrap_or(base.layers),
                vocab_size,
                ..base
            };
            let bundle = default_bundle(&dims, c.seed).map_err(infra)?;
            bundle.save(&out).map_err(infra)?;
            Ok(json!({
                "path": out,
                "seed": c.seed,
                "dims": dims,
                "params": bundle.len(),
                "sha256": sha256_hex(&bundle.to_bytes()),
            }))
        }
    }
}

/// Ignores a closed stdout so piping into `head` is not an error.
fn emit(v: &Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).expect("json output"));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(v) => {
            emit(&v);
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{}", e.message);
            emit(&e.to_json());
            ExitCode::from(e.code() as u8)
        }
    }
}
