use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use laborscope_core::clustering::{cosine_distance_matrix, hierarchical_cluster, select_top_regions, Linkage};
use laborscope_core::dynamics::{chain, Matching};
use laborscope_core::factorization::{fit, load_model, save_model, FitConfig, Init, Solver};
use laborscope_core::ingest::{to_matrix, to_pooled_matrix};
use laborscope_core::pipeline::{load_table, run_pipeline, InputFile, PipelineConfig};
use laborscope_core::spatial::{
    build_weights, location_quotient, morans_i_table, write_moran_csv, RegionCoordinates, RegionVariables,
    SectorMap, SpatialWeights, WeightSource,
};
use laborscope_core::synth::{generate, SynthSpec};
use laborscope_core::topics::{
    compose_regions, summarize_topics, topic_prevalence, write_compositions_csv, write_prevalence_csv,
    write_prevalence_table_csv,
};
use laborscope_core::weighting::{tfidf_with_base, top_k_by_region, write_top_occupations_csv, LogBase};
use laborscope_core::{EmploymentTable, Error, MatrixKind, RegionOccupationMatrix, Result};

/// Industrial topics from regional employment tables.
#[derive(Parser)]
#[command(name = "laborscope", version)]
struct Cli {
    /// Pipeline config (TOML). Used by `run` and `ingest`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output path, or `-` for stdout where the output is a single file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse employment CSVs into one table.
    Ingest(IngestArgs),
    /// TF-IDF weight a table.
    Tfidf(TfidfArgs),
    /// Factor a TF-IDF matrix into topics.
    Fit(FitArgs),
    /// Top occupations of every topic.
    Topics(TopicsArgs),
    /// Topical composition of every region.
    Compose(ModelArgs),
    /// Weight of topics across regions.
    Prevalence(PrevalenceArgs),
    /// Chain topics across yearly models.
    Align(AlignArgs),
    /// Cluster regions by topical composition.
    Cluster(ClusterArgs),
    /// Moran's I of per-region variables.
    Moran(MoranArgs),
    /// Location quotients by sector.
    Lq(LqArgs),
    /// Generate a synthetic corpus with planted topics.
    Synth(SynthArgs),
    /// Run the whole pipeline from a config.
    Run,
}

#[derive(Args)]
struct IngestArgs {
    /// Employment CSV files.
    #[arg(long = "input", num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Year for files without a year column.
    #[arg(long)]
    year: Option<i32>,
    #[arg(long)]
    crosswalk: Option<PathBuf>,
    /// Comma-separated years to keep.
    #[arg(long, value_delimiter = ',')]
    years: Vec<i32>,
}

#[derive(Args)]
struct TfidfArgs {
    /// Table from `ingest` (CSV or .lscope).
    #[arg(long, required_unless_present = "input", conflicts_with = "input")]
    table: Option<PathBuf>,
    /// Raw region x occupation matrix (CSV or .lscope) instead of a table.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Use one year instead of pooling all years.
    #[arg(long, conflicts_with = "input")]
    year: Option<i32>,
    #[arg(long, default_value = "e")]
    log_base: LogBase,
    /// Drop occupations with no employment anywhere.
    #[arg(long, alias = "prune-empty")]
    prune: bool,
    /// Print this region's top occupations instead of the matrix.
    #[arg(long)]
    region: Option<String>,
    #[arg(long, default_value_t = 5)]
    top: usize,
}

#[derive(Args)]
struct FitArgs {
    /// TF-IDF matrix (CSV or .lscope).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 15)]
    k: usize,
    #[arg(long, default_value = "mu")]
    solver: Solver,
    #[arg(long, default_value = "nndsvd")]
    init: Init,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Year recorded in the model metadata.
    #[arg(long)]
    year: Option<i32>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct TopicsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, alias = "top-n", default_value_t = 10)]
    top: usize,
    /// Comma-separated topic labels, in topic order.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
}

#[derive(Args)]
struct PrevalenceArgs {
    #[arg(long)]
    model: PathBuf,
    /// One-based topic; all topics as columns when omitted.
    #[arg(long)]
    topic: Option<usize>,
}

#[derive(Args)]
struct AlignArgs {
    /// Model directories in year order.
    #[arg(long = "models", num_args = 2..)]
    models: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value = "greedy")]
    matching: Matching,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    model: PathBuf,
    /// Table used to rank regions by employment.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Year whose employment ranks regions; all years when omitted.
    #[arg(long)]
    year: Option<i32>,
    #[arg(long, default_value_t = 50)]
    top: usize,
    #[arg(long, default_value = "average")]
    linkage: Linkage,
    /// Distance matrix in dendrogram leaf order.
    #[arg(long)]
    heatmap: Option<PathBuf>,
}

#[derive(Args)]
struct MoranArgs {
    /// CSVs with a `region` column and one column per variable.
    #[arg(long = "values", num_args = 1..)]
    values: Vec<PathBuf>,
    /// `region_code,lat,lon` CSV.
    #[arg(long)]
    coordinates: Option<PathBuf>,
    /// `region,neighbor[,weight]` CSV, used instead of coordinates.
    #[arg(long)]
    adjacency: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    knn: usize,
    /// Inverse-distance weights with this power instead of nearest neighbours.
    #[arg(long)]
    inverse_distance: Option<f64>,
    #[arg(long)]
    no_row_standardize: bool,
    /// Random relabelings for a pseudo p-value.
    #[arg(long)]
    permutations: Option<usize>,
}

#[derive(Args)]
struct LqArgs {
    #[arg(long)]
    table: PathBuf,
    /// `occupation_code,sector_code` CSV.
    #[arg(long)]
    sectors: PathBuf,
    #[arg(long)]
    year: Option<i32>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 60)]
    regions: usize,
    #[arg(long, default_value_t = 200)]
    occupations: usize,
    #[arg(long, default_value_t = 8)]
    topics: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    years: usize,
    #[arg(long, default_value_t = 2014)]
    first_year: i32,
    #[arg(long, default_value_t = 0.1)]
    local_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    drift: f64,
}

/// Sends a single-file output to `--out`, stdout for `-`, or `default`.
fn emit(out: Option<&Path>, default: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    let path = out.unwrap_or(Path::new(default));
    if path == Path::new("-") {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(&buf).and_then(|_| stdout.flush()).map_err(|e| Error::io("<stdout>", e))
    } else {
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

fn emit_json(out: Option<&Path>, default: &str, value: &serde_json::Value) -> Result<()> {
    emit(out, default, |b| {
        serde_json::to_writer_pretty(&mut *b, value)?;
        b.push(b'\n');
        Ok(())
    })
}

/// Directory outputs cannot go to stdout.
fn out_dir(out: Option<&Path>, default: &str) -> Result<PathBuf> {
    match out {
        Some(p) if p == Path::new("-") => Err(Error::Config("this command writes a directory; `--out -` is not supported".into())),
        Some(p) => Ok(p.to_path_buf()),
        None => Ok(PathBuf::from(default)),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out = cli.out.as_deref();
    let seed = cli.seed;
    let config = || -> Result<PipelineConfig> {
        let mut cfg = match &cli.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(cfg)
    };

    match cli.command {
        Command::Ingest(a) => {
            let mut cfg = config()?;
            if !a.inputs.is_empty() {
                cfg.inputs = a.inputs.into_iter().map(|path| InputFile { path, year: a.year }).collect();
            }
            if a.crosswalk.is_some() {
                cfg.crosswalk = a.crosswalk;
            }
            if !a.years.is_empty() {
                cfg.years = a.years;
            }
            if cfg.inputs.is_empty() {
                return Err(Error::Config("no input files given".into()));
            }
            let (table, _) = load_table(&cfg)?;
            match out {
                Some(p) if p != Path::new("-") => table.save(p),
                _ => emit(Some(Path::new("-")), "-", |b| table.write_csv(b)),
            }
        }
        Command::Tfidf(a) => {
            let raw = match (&a.table, &a.input) {
                (Some(t), _) => {
                    let table = EmploymentTable::load(t)?;
                    match a.year {
                        Some(y) => to_matrix(&table, y)?,
                        None => to_pooled_matrix(&table, &[])?,
                    }
                }
                (None, Some(m)) => RegionOccupationMatrix::load(m, MatrixKind::Raw)?,
                (None, None) => unreachable!("clap requires --table or --in"),
            };
            let raw = if a.prune { raw.prune_empty_columns() } else { raw };
            let x = tfidf_with_base(&raw, a.log_base)?;
            if let Some(region) = a.region {
                let top = top_k_by_region(&x, &region, a.top)?;
                return emit(out, "-", |b| write_top_occupations_csv(&x, &top, b));
            }
            match out {
                Some(p) if p != Path::new("-") => x.save(p),
                _ => emit(Some(Path::new("-")), "-", |b| x.write_csv(b)),
            }
        }
        Command::Fit(a) => {
            let x = RegionOccupationMatrix::load(&a.input, MatrixKind::Tfidf)?;
            let cfg = FitConfig {
                k: a.k,
                max_iter: a.max_iter,
                tol: a.tol,
                solver: a.solver,
                init: a.init,
                seed: seed.unwrap_or(0),
            };
            let mut model = fit(&x, &cfg)?;
            model.year = a.year;
            log::info!(
                "{} iterations, converged: {}, objective {}",
                model.iterations_run,
                model.converged,
                model.final_objective()
            );
            save_model(&model, &out_dir(out, "model")?)
        }
        Command::Topics(a) => {
            let mut model = load_model(&a.model)?;
            if !a.labels.is_empty() {
                model.set_labels(a.labels);
            }
            let summaries = summarize_topics(&model, a.top);
            emit_json(out, "-", &serde_json::to_value(summaries)?)
        }
        Command::Compose(a) => {
            let model = load_model(&a.model)?;
            let comps = compose_regions(&model);
            emit(out, "-", |b| write_compositions_csv(&comps, model.k, b))
        }
        Command::Prevalence(a) => {
            let model = load_model(&a.model)?;
            match a.topic {
                Some(t) => {
                    let rows = topic_prevalence(&model, t)?;
                    emit(out, "-", |b| write_prevalence_csv(&rows, b))
                }
                None => emit(out, "-", |b| write_prevalence_table_csv(&compose_regions(&model), model.k, b)),
            }
        }
        Command::Align(a) => {
            let models = a.models.iter().map(|d| load_model(d)).collect::<Result<Vec<_>>>()?;
            let alignment = chain(&models, a.alpha, a.matching)?;
            emit_json(out, "-", &alignment.to_json())
        }
        Command::Cluster(a) => {
            let model = load_model(&a.model)?;
            let comps: Vec<_> = compose_regions(&model).into_iter().filter(|c| !c.degenerate).collect();
            let top = match &a.table {
                Some(t) => select_top_regions(&comps, &EmploymentTable::load(t)?, a.top.min(comps.len()), a.year),
                None if comps.len() <= a.top => comps,
                None => {
                    return Err(Error::Config(format!(
                        "--table is needed to pick the top {} of {} regions",
                        a.top,
                        comps.len()
                    )))
                }
            };
            let d = cosine_distance_matrix(&top)?;
            let tree = hierarchical_cluster(&d, a.linkage)?;
            if let Some(h) = &a.heatmap {
                emit(Some(h), "-", |b| d.reordered(&tree.leaf_order()).write_csv(b))?;
            }
            emit_json(out, "-", &tree.to_json())
        }
        Command::Moran(a) => {
            let weights = match (&a.adjacency, &a.coordinates) {
                (Some(adj), _) => {
                    let w = SpatialWeights::load_adjacency(adj)?;
                    if a.no_row_standardize { w } else { w.row_standardize() }
                }
                (None, Some(c)) => {
                    let source = match a.inverse_distance {
                        Some(p) => WeightSource::InverseDistance(p),
                        None => WeightSource::Knn(a.knn),
                    };
                    build_weights(&RegionCoordinates::load(c)?, source, !a.no_row_standardize)?
                }
                (None, None) => return Err(Error::Config("give --coordinates or --adjacency".into())),
            };
            let perms = a.permutations.map(|n| (n, seed.unwrap_or(0)));
            let mut rows = Vec::new();
            for path in &a.values {
                let group = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                rows.extend(morans_i_table(&group, &RegionVariables::load(path)?, &weights, perms)?);
            }
            emit(out, "-", |b| write_moran_csv(&rows, b))
        }
        Command::Lq(a) => {
            let table = EmploymentTable::load(&a.table)?;
            let raw = match a.year {
                Some(y) => to_matrix(&table, y)?,
                None => to_pooled_matrix(&table, &[])?,
            };
            let lq = location_quotient(&raw, &SectorMap::load(&a.sectors)?)?;
            emit(out, "-", |b| lq.write_csv(b))
        }
        Command::Synth(a) => {
            let spec = SynthSpec {
                regions: a.regions,
                occupations: a.occupations,
                topics: a.topics,
                seed: seed.unwrap_or(0),
                noise_level: a.noise,
                local_occupation_fraction: a.local_fraction,
                years: a.years,
                first_year: a.first_year,
                drift: a.drift,
                ..SynthSpec::default()
            };
            generate(&spec)?.write_dir(&out_dir(out, "corpus")?)
        }
        Command::Run => {
            if cli.config.is_none() {
                return Err(Error::Config("`run` needs --config".into()));
            }
            let mut cfg = config()?;
            if let Some(dir) = out {
                cfg.out_dir = out_dir(Some(dir), "out")?;
            }
            let manifest = run_pipeline(&cfg)?;
            log::info!("wrote {} files to {}", manifest.outputs.len(), cfg.out_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
