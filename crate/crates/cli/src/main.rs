//! `tripnb`: batch experiments for neighbor-based trip prediction.
//!
//! Every run writes its outputs plus a `config.json` echo of the effective
//! parameters into `--out-dir`. Exit codes: 0 success, 2 usage or
//! configuration error, 3 input error, 4 internal error.

use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use trip_neighbors::eval::{self, DataSource, NmfSettings, SweepResult};
use trip_neighbors::ingest::{self, GroupPolicy};
use trip_neighbors::nmf::NmfParams;
use trip_neighbors::synth::{self, BBox, SynthParams};
use trip_neighbors::{Dataset, Error, MetricVariant};

#[derive(Parser, Serialize)]
#[command(
    name = "tripnb",
    version,
    about = "Neighbor-based trip prediction experiments"
)]
struct Cli {
    /// Worker threads for per-entity prediction [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr
    #[arg(short, long, global = true)]
    #[serde(skip)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Group raw trip records into entities with a fixed history length
    Ingest(IngestArgs),
    /// Generate a synthetic archetype population
    Synth(SynthArgs),
    /// Prediction error against neighbor count on one dataset
    Sweep(SweepArgs),
    /// One sweep per history length and distance variant
    PerL(PerLArgs),
    /// Short-history entities evaluated with a long-history pool added
    Augment(AugmentArgs),
    /// One sweep over a pool mixing several history lengths
    Mixed(MixedArgs),
    /// Paired sweeps without and with NMF features
    NmfAblation(NmfAblationArgs),
    /// Write a dataset back out as raw trip records
    Export(ExportArgs),
}

#[derive(Args, Serialize)]
struct IngestArgs {
    /// Raw trip-record CSV
    #[arg(long)]
    input: PathBuf,
    /// History length L
    #[arg(long)]
    l: usize,
    /// Which records to keep when a group has more than L+1: exact or earliest
    #[arg(long, default_value = "earliest")]
    policy: GroupPolicy,
    /// Keep at most this many entities (seeded subsample)
    #[arg(long)]
    entities: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct GeneratorArgs {
    /// Number of archetypes
    #[arg(long, default_value_t = 4)]
    archetypes: usize,
    /// Per-coordinate noise standard deviation, degrees
    #[arg(long, default_value_t = 0.002)]
    sigma: f64,
    /// Probability that a trip is uniform in the bounding box
    #[arg(long, default_value_t = 0.1)]
    outlier_rate: f64,
    /// Bounding box as lon_min,lon_max,lat_min,lat_max
    #[arg(long, value_delimiter = ',', num_args = 4, allow_hyphen_values = true,
          default_values_t = [6.14, 6.20, 48.64, 48.70])]
    bbox: Vec<f64>,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// History lengths, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    l_list: Vec<usize>,
    /// Entities per history length
    #[arg(long, default_value_t = SynthParams::DEFAULT_ENTITIES_PER_L)]
    entities: usize,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Where entities come from: `--input` (raw records), `--dataset` (a file
/// written by ingest, synth or export), or the synthetic generator.
#[derive(Args, Serialize, Clone)]
struct SourceArgs {
    /// Raw trip-record CSV, grouped per history length
    #[arg(long, conflicts_with = "dataset")]
    input: Option<PathBuf>,
    /// Grouping policy for --input: exact or earliest
    #[arg(long, default_value = "earliest")]
    policy: GroupPolicy,
    /// Dataset CSV with an is-test column
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Entities per history length [synthetic default: 200; files: all]
    #[arg(long)]
    entities: Option<usize>,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Seed for the generator, subsampling and NMF initialization
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize, Clone)]
struct NmfArgs {
    /// Select neighbors on rank-r NMF features
    #[arg(long)]
    nmf_rank: Option<usize>,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Stop when the relative decrease of the error falls below this
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Shift coordinates by their minimum before factorizing
    #[arg(long)]
    min_shift: bool,
    /// Directory for cached factorizations
    #[arg(long)]
    nmf_cache: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct OutArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write one SVG chart per sweep
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// History length; optional with --dataset
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, default_value = "all2all")]
    variant: MetricVariant,
    #[arg(long, default_value_t = 30)]
    k_max: usize,
    #[command(flatten)]
    nmf: NmfArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct PerLArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    l_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "all2all,ordered")]
    variants: Vec<MetricVariant>,
    #[arg(long, default_value_t = 30)]
    k_max: usize,
    #[command(flatten)]
    nmf: NmfArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct AugmentArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value_t = 2)]
    short_l: usize,
    #[arg(long)]
    long_l: usize,
    /// Numbers of short-history entities to evaluate, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    k_max: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct MixedArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// History lengths to pool; omit to use a --dataset file as is
    #[arg(long, value_delimiter = ',')]
    l_list: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    k_max: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct NmfAblationArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, default_value = "all2all")]
    variant: MetricVariant,
    #[arg(long, default_value_t = 30)]
    k_max: usize,
    /// NMF rank is --nmf-rank, default 4
    #[command(flatten)]
    nmf: NmfArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct ExportArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Input(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Internal(m) => m,
        }
    }
}

fn classify(e: &Error) -> fn(String) -> Failure {
    match e {
        Error::Entity { source, .. } => classify(source),
        Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::Schema { .. }
        | Error::NonFiniteCoordinate(_)
        | Error::UnsupportedTrip { .. }
        | Error::EmptyEntity { .. }
        | Error::DuplicateYday { .. }
        | Error::TestNotAfterHistory { .. }
        | Error::DuplicateEntity(_)
        | Error::CannotSplit { .. }
        | Error::EmptyHistory => Failure::Input,
        Error::InvalidSynthParams(_)
        | Error::InvalidNmfParam(_)
        | Error::InvalidExperiment(_)
        | Error::RankOutOfRange { .. }
        | Error::UnalignedHistories { .. }
        | Error::EmptyEvaluation
        | Error::EvaluationIncomplete { .. }
        | Error::DegenerateInput
        | Error::NegativeFeature { .. } => Failure::Usage,
        _ => Failure::Internal,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        classify(&e)(e.to_string())
    }
}

type Run<T = ()> = Result<T, Failure>;

fn reading(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| classify(&e)(format!("{}: {e}", path.display()))
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn write_file(path: &Path, bytes: &[u8]) -> Run {
    fs::write(path, bytes)
        .map_err(|e| Failure::Internal(format!("writing {}: {e}", path.display())))
}

fn create_out_dir(dir: &Path) -> Run {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Internal(format!("creating {}: {e}", dir.display())))
}

fn write_config(cli: &Cli, dir: &Path, effective: serde_json::Value) -> Run {
    let echo = json!({
        "tool": "tripnb",
        "version": env!("CARGO_PKG_VERSION"),
        "threads": cli.threads,
        "command": &cli.command,
        "effective": effective,
    });
    let mut text =
        serde_json::to_string_pretty(&echo).map_err(|e| Failure::Internal(e.to_string()))?;
    text.push('\n');
    write_file(&dir.join("config.json"), text.as_bytes())
}

fn to_json<T: Serialize>(value: &T) -> Run<serde_json::Value> {
    serde_json::to_value(value).map_err(|e| Failure::Internal(e.to_string()))
}

fn bbox(v: &[f64]) -> BBox {
    BBox {
        lon_min: v[0],
        lon_max: v[1],
        lat_min: v[2],
        lat_max: v[3],
    }
}

fn generator_params(
    g: &GeneratorArgs,
    seed: u64,
    l_counts: Vec<(usize, usize)>,
) -> Run<SynthParams> {
    let p = SynthParams {
        l_counts,
        n_archetypes: g.archetypes,
        bbox: bbox(&g.bbox),
        noise_sigma: g.sigma,
        outlier_rate: g.outlier_rate,
        seed,
    };
    p.validate()?;
    Ok(p)
}

fn dataset_bytes(ds: &Dataset) -> Run<Vec<u8>> {
    let mut buf = Vec::new();
    ingest::export_dataset_csv(ds, &mut buf)?;
    Ok(buf)
}

fn load_source(s: &SourceArgs) -> Run<(DataSource, serde_json::Value)> {
    let subsample_seed = || {
        s.seed
            .ok_or_else(|| usage("--entities on a file source needs --seed for the subsample"))
    };
    if let Some(path) = &s.input {
        let parsed = ingest::parse_csv_path(path).map_err(reading(path))?;
        for e in &parsed.errors {
            tracing::warn!(line = e.line, "skipping row: {}", e.message);
        }
        let seed = match s.entities {
            Some(_) => subsample_seed()?,
            None => s.seed.unwrap_or(0),
        };
        let effective = json!({ "source": "records", "rows": parsed.records.len(),
            "row_errors": parsed.errors.len() });
        let source = DataSource::Records {
            records: parsed.records,
            policy: s.policy,
            max_entities: s.entities,
            seed,
        };
        return Ok((source, effective));
    }
    if let Some(path) = &s.dataset {
        let ds = ingest::read_dataset_path(path).map_err(reading(path))?;
        let (entities, mut meta) = ds.into_parts();
        meta.seed = match s.entities {
            Some(_) => Some(subsample_seed()?),
            None => s.seed,
        };
        let ds = Dataset::new(entities, meta)?;
        let effective = json!({ "source": "dataset", "entities": ds.len(),
            "history_lengths": &ds.meta().history_lengths });
        return Ok((DataSource::Fixed(ds), effective));
    }
    let seed = s
        .seed
        .ok_or_else(|| usage("synthetic data needs --seed (or pass --input or --dataset)"))?;
    let count = s.entities.unwrap_or(SynthParams::DEFAULT_ENTITIES_PER_L);
    let params = generator_params(&s.generator, seed, vec![(1, count)])?;
    let mut generator = to_json(&params)?;
    if let Some(map) = generator.as_object_mut() {
        // history lengths come from the command, not from this placeholder
        map.remove("l_counts");
    }
    let effective =
        json!({ "source": "synthetic", "entities_per_l": count, "generator": generator });
    Ok((DataSource::Synthetic(params), effective))
}

/// The dataset for one history length, or the whole `--dataset` file.
fn select_dataset(source: &DataSource, args: &SourceArgs, l: Option<usize>) -> Run<Dataset> {
    match (l, source) {
        (Some(l), _) => Ok(source.dataset_for(l, args.entities)?),
        (None, DataSource::Fixed(ds)) => Ok(match args.entities {
            Some(n) if n < ds.len() => ingest::subsample(ds, n, ds.meta().seed.unwrap_or(0)),
            _ => ds.clone(),
        }),
        (None, _) => Err(usage("--l is required unless --dataset is given")),
    }
}

fn nmf_settings(
    n: &NmfArgs,
    seed: Option<u64>,
    default_rank: Option<usize>,
) -> Run<Option<NmfSettings>> {
    let Some(rank) = n.nmf_rank.or(default_rank) else {
        return Ok(None);
    };
    let seed = seed.ok_or_else(|| usage("NMF initialization needs --seed"))?;
    Ok(Some(NmfSettings {
        params: NmfParams {
            rank,
            max_iters: n.max_iters,
            tol: n.tol,
            seed,
        },
        min_shift: n.min_shift,
        cache_dir: n.nmf_cache.clone(),
    }))
}

fn write_results(out: &OutArgs, results: &[SweepResult]) -> Run {
    let mut buf = Vec::new();
    eval::write_results_csv(results, &mut buf)?;
    write_file(&out.out_dir.join("results.csv"), &buf)?;
    let mut buf = Vec::new();
    eval::write_summary_csv(results, &mut buf)?;
    write_file(&out.out_dir.join("summary.csv"), &buf)?;
    if out.plot {
        for r in results {
            let name = format!("{}.svg", r.config.experiment_id);
            write_file(&out.out_dir.join(name), eval::render_svg(r).as_bytes())?;
        }
    }
    for r in results {
        let s = &r.summary;
        let nearest = s
            .nearest_neighbor_mse
            .map_or("-".to_string(), |v| format!("{v:e}"));
        println!(
            "{} {} L={} self_only={:e} nearest={} oracle_k={} oracle={:e}",
            r.config.experiment_id,
            r.config.variant,
            r.config.l_label,
            s.self_only_mse,
            nearest,
            s.oracle_k,
            s.oracle_mse
        );
    }
    Ok(())
}

fn cmd_ingest(cli: &Cli, a: &IngestArgs) -> Run {
    if a.entities.is_some() && a.seed.is_none() {
        return Err(usage("--entities needs --seed for the subsample"));
    }
    let parsed = ingest::parse_csv_path(&a.input).map_err(reading(&a.input))?;
    let grouped = ingest::group_entities(&parsed.records, a.l, a.policy)?;
    let mut ds = grouped.dataset;
    if let (Some(n), Some(seed)) = (a.entities, a.seed) {
        if n < ds.len() {
            ds = ingest::subsample(&ds, n, seed);
        }
    }
    create_out_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("dataset.csv"), &dataset_bytes(&ds)?)?;
    let report = json!({
        "rows": parsed.records.len(),
        "row_errors": &parsed.errors,
        "groups": grouped.report.groups,
        "eligible": grouped.report.eligible,
        "excluded_count": grouped.report.excluded.len(),
        "excluded": &grouped.report.excluded,
        "entities_written": ds.len(),
    });
    let text =
        serde_json::to_string_pretty(&report).map_err(|e| Failure::Internal(e.to_string()))?;
    write_file(
        &a.out_dir.join("ingest_report.json"),
        format!("{text}\n").as_bytes(),
    )?;
    println!(
        "{} entities with L={} ({} groups, {} excluded, {} bad rows)",
        ds.len(),
        a.l,
        grouped.report.groups,
        grouped.report.excluded.len(),
        parsed.errors.len()
    );
    write_config(cli, &a.out_dir, json!({ "entities": ds.len() }))
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Run {
    let l_counts = a.l_list.iter().map(|&l| (l, a.entities)).collect();
    let params = generator_params(&a.generator, a.seed, l_counts)?;
    let (ds, labels) = synth::generate(&params)?;
    create_out_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("dataset.csv"), &dataset_bytes(&ds)?)?;
    let mut text = String::from("ticket_id,w-day,d-hour,archetype\n");
    for (key, arch) in &labels {
        text.push_str(&format!(
            "{},{},{},{arch}\n",
            key.ticket_id, key.wday, key.dhour
        ));
    }
    write_file(&a.out_dir.join("labels.csv"), text.as_bytes())?;
    println!("{} synthetic entities", ds.len());
    write_config(cli, &a.out_dir, json!({ "generator": to_json(&params)? }))
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> Run {
    let (source, effective) = load_source(&a.source)?;
    let ds = select_dataset(&source, &a.source, a.l)?;
    let nmf = nmf_settings(&a.nmf, a.source.seed, None)?;
    let r = eval::sweep_neighbors(&ds, a.variant, a.k_max, nmf.as_ref(), None)?;
    let id = format!("sweep-L{}-{}", r.config.l_label, a.variant);
    let r = r.with_id(id);
    create_out_dir(&a.out.out_dir)?;
    write_results(&a.out, std::slice::from_ref(&r))?;
    write_config(
        cli,
        &a.out.out_dir,
        json!({ "source": effective, "nmf": nmf, "config": &r.config }),
    )
}

fn cmd_per_l(cli: &Cli, a: &PerLArgs) -> Run {
    let (source, effective) = load_source(&a.source)?;
    let source = match (a.source.entities, source) {
        (Some(n), DataSource::Fixed(ds)) => DataSource::Fixed(cap_per_length(&ds, n)?),
        (_, s) => s,
    };
    let nmf = nmf_settings(&a.nmf, a.source.seed, None)?;
    let outcome = eval::experiment_per_l(&source, &a.l_list, &a.variants, a.k_max, nmf.as_ref())?;
    create_out_dir(&a.out.out_dir)?;
    write_results(&a.out, &outcome.results)?;
    let text = serde_json::to_string_pretty(&outcome.skipped)
        .map_err(|e| Failure::Internal(e.to_string()))?;
    write_file(
        &a.out.out_dir.join("skipped.json"),
        format!("{text}\n").as_bytes(),
    )?;
    for s in &outcome.skipped {
        println!("skipped L={} {}: {}", s.l, s.variant, s.reason);
    }
    write_config(
        cli,
        &a.out.out_dir,
        json!({ "source": effective, "nmf": nmf, "skipped": &outcome.skipped }),
    )
}

fn cmd_augment(cli: &Cli, a: &AugmentArgs) -> Run {
    if a.short_l == a.long_l {
        return Err(usage("--short-l and --long-l must differ"));
    }
    let (source, effective) = load_source(&a.source)?;
    let short = source.dataset_for(a.short_l, a.source.entities)?;
    let long = source.dataset_for(a.long_l, a.source.entities)?;
    let seed = a.source.seed.unwrap_or(0);
    let outcome = eval::experiment_augment(&short, &long, &a.counts, a.k_max, seed)?;
    create_out_dir(&a.out.out_dir)?;
    write_results(&a.out, &outcome.results)?;
    write_config(
        cli,
        &a.out.out_dir,
        json!({ "source": effective, "short_entities": short.len(),
        "long_entities": long.len(), "warnings": &outcome.warnings }),
    )
}

fn cmd_mixed(cli: &Cli, a: &MixedArgs) -> Run {
    let (source, effective) = load_source(&a.source)?;
    let ds = if a.l_list.is_empty() {
        select_dataset(&source, &a.source, None)?
    } else {
        source.mixed(&a.l_list, a.source.entities)?
    };
    let r = eval::experiment_mixed(&ds, a.k_max)?;
    create_out_dir(&a.out.out_dir)?;
    write_results(&a.out, std::slice::from_ref(&r))?;
    write_config(
        cli,
        &a.out.out_dir,
        json!({ "source": effective, "config": &r.config }),
    )
}

fn cmd_nmf_ablation(cli: &Cli, a: &NmfAblationArgs) -> Run {
    let (source, effective) = load_source(&a.source)?;
    let ds = select_dataset(&source, &a.source, a.l)?;
    let nmf = nmf_settings(&a.nmf, a.source.seed, Some(4))?.expect("rank defaulted");
    let (raw, with) = eval::experiment_nmf_ablation(&ds, a.variant, a.k_max, &nmf)?;
    create_out_dir(&a.out.out_dir)?;
    write_results(&a.out, &[raw, with])?;
    write_config(
        cli,
        &a.out.out_dir,
        json!({ "source": effective, "nmf": nmf }),
    )
}

fn cmd_export(cli: &Cli, a: &ExportArgs) -> Run {
    let (source, effective) = load_source(&a.source)?;
    let ds = select_dataset(&source, &a.source, a.l)?;
    create_out_dir(&a.out_dir)?;
    let mut buf = Vec::new();
    ingest::export_records_csv(&ingest::dataset_records(&ds), &mut buf)?;
    write_file(&a.out_dir.join("records.csv"), &buf)?;
    write_file(&a.out_dir.join("dataset.csv"), &dataset_bytes(&ds)?)?;
    println!("{} entities exported", ds.len());
    write_config(
        cli,
        &a.out_dir,
        json!({ "source": effective, "entities": ds.len() }),
    )
}

/// Caps every history length of a fixed dataset at `n` entities.
fn cap_per_length(ds: &Dataset, n: usize) -> Run<Dataset> {
    let seed = ds.meta().seed.unwrap_or(0);
    let mut merged: Option<Dataset> = None;
    for &l in &ds.meta().history_lengths {
        let part = ds.with_length(l);
        let part = if n < part.len() {
            ingest::subsample(&part, n, seed)
        } else {
            part
        };
        merged = Some(match merged {
            None => part,
            Some(acc) => ingest::merge_datasets(&acc, &part)?,
        });
    }
    Ok(merged.unwrap_or_else(|| ds.clone()))
}

fn run(cli: &Cli) -> Run {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(cli, a),
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::PerL(a) => cmd_per_l(cli, a),
        Command::Augment(a) => cmd_augment(cli, a),
        Command::Mixed(a) => cmd_mixed(cli, a),
        Command::NmfAblation(a) => cmd_nmf_ablation(cli, a),
        Command::Export(a) => cmd_export(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose {
        tracing::Level::INFO
    } else {
        tracing::Level::WARN
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
