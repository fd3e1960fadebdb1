use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use entimpute::classify::{impute_categories, train, Method, TrainParams, TrainedModel};
use entimpute::corpus::{ingest, missingness, save_records, EnterpriseRecord};
use entimpute::evaluate::{cross_validate, kfold, speedup};
use entimpute::gazetteer::{build, load_entries, validate, write_entries, AddressTree};
use entimpute::geocode::{geocode_records, load_keys, write_results, ApiKey, BatchConfig, GeocodeProvider, HttpProvider, MockProvider};
use entimpute::locimpute::{impute_locations, Stages};
use entimpute::pipeline::{run_pipeline, PipelineConfig, StageError};
use entimpute::segmenter::{segment, Lexicon};
use entimpute::spatial::{parse_radii, ripley_k, select, write_geojson, ExportFilter, PointSet};
use entimpute::synth::{labeled_points, synth, write_synthetic, MissingRates, SynthConfig, REGISTRY_MISSING_RATES};
use entimpute::vectorizer::{dump_line, record_vector, to_labeled, DEFAULT_DIM};
use entimpute::{Category, Error};

#[derive(Parser)]
#[command(name = "entimpute", version, about = "Impute categories and locations in enterprise registration records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a record file and report per-field missingness.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with lexicon, gazetteer and ground truth.
    Synth(SynthArgs),
    /// Segment text into tagged tokens.
    Segment(SegmentArgs),
    /// Print hashed feature vectors of record names.
    Vectorize(VectorizeArgs),
    /// Train a category classifier on records that carry a category.
    Train(TrainArgs),
    /// K-fold cross-validation of a classifier.
    Evaluate(EvaluateArgs),
    /// Training wall-time against worker count.
    Speedup(SpeedupArgs),
    /// Fill missing categories with a trained model.
    ImputeCategory(ImputeCategoryArgs),
    /// Load a gazetteer file and report its size.
    BuildGazetteer(BuildGazetteerArgs),
    /// Check how well records' addresses and postcodes agree with a gazetteer.
    ValidateGazetteer(LocationArgs),
    /// Fill missing postcodes from address nouns.
    ImputePostcode(LocationArgs),
    /// Fill administrative divisions from postcodes.
    ImputeAd(LocationArgs),
    /// Fill postcodes, then administrative divisions.
    ImputeLocation(LocationArgs),
    /// Geocode records through a provider and a key pool.
    Geocode(GeocodeArgs),
    /// Ripley's K over geocoded records.
    Kfunction(KfunctionArgs),
    /// Export geocoded records as GeoJSON points.
    Export(ExportArgs),
    /// Run the whole pipeline from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct LexiconArg {
    /// Lexicon TSV (word<TAB>pos); the bundled demo lexicon when omitted.
    #[arg(long, env = "ENTIMPUTE_LEXICON")]
    lexicon: Option<PathBuf>,
}

impl LexiconArg {
    fn load(&self) -> Result<Lexicon> {
        match &self.lexicon {
            Some(p) => Ok(Lexicon::load(p)?),
            None => Ok(Lexicon::demo()),
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    records: PathBuf,
    /// Write the parsed records back out in canonical form.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, env = "ENTIMPUTE_OUT_DIR")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    records: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    lexicon_seed: u64,
    #[arg(long, default_value_t = 0.30)]
    ambiguity_rate: f64,
    #[arg(long, default_value_t = 0.35)]
    province_omit_rate: f64,
    #[arg(long, default_value_t = REGISTRY_MISSING_RATES.name)]
    missing_name: f64,
    #[arg(long, default_value_t = REGISTRY_MISSING_RATES.category)]
    missing_category: f64,
    #[arg(long, default_value_t = REGISTRY_MISSING_RATES.address)]
    missing_address: f64,
    #[arg(long, default_value_t = REGISTRY_MISSING_RATES.postcode)]
    missing_postcode: f64,
    #[arg(long, default_value_t = REGISTRY_MISSING_RATES.data_source)]
    missing_data_source: f64,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    lexicon: LexiconArg,
    /// Text to segment; lines of standard input when omitted.
    text: Vec<String>,
}

#[derive(Args)]
struct VectorizeArgs {
    records: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArg,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    #[value(alias = "nb")]
    NaiveBayes,
    #[value(alias = "lr")]
    LogisticRegression,
    #[value(alias = "svm")]
    LinearSvm,
    #[value(alias = "dt")]
    DecisionTree,
    #[value(alias = "rf")]
    RandomForest,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::NaiveBayes => Method::NaiveBayes,
            MethodArg::LogisticRegression => Method::LogisticRegression,
            MethodArg::LinearSvm => Method::LinearSvm,
            MethodArg::DecisionTree => Method::DecisionTree,
            MethodArg::RandomForest => Method::RandomForest,
        }
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "logistic-regression")]
    method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    #[arg(long, env = "ENTIMPUTE_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 1.0)]
    nb_alpha: f64,
    #[arg(long, default_value_t = 100)]
    lr_iters: usize,
    #[arg(long, default_value_t = 1.0)]
    lr_step: f64,
    #[arg(long, default_value_t = 0.01)]
    lr_l2: f64,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn params(&self) -> Result<TrainParams> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()).into());
        }
        let mut p = TrainParams {
            nb_alpha: self.nb_alpha,
            workers: self.workers,
            ..TrainParams::default()
        };
        p.lr.iters = self.lr_iters;
        p.lr.step = self.lr_step;
        p.lr.l2 = self.lr_l2;
        p.forest.num_trees = self.trees;
        p.forest.seed = self.seed;
        Ok(p)
    }
}

#[derive(Args)]
struct TrainArgs {
    records: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArg,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, env = "ENTIMPUTE_MODEL")]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    records: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArg,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Include mean per-fold wall-times in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct SpeedupArgs {
    /// Record file; omit and pass --synthetic to time generated vectors.
    records: Option<PathBuf>,
    /// Number of generated labeled vectors.
    #[arg(long, conflicts_with = "records")]
    synthetic: Option<usize>,
    #[command(flatten)]
    lexicon: LexiconArg,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    worker_counts: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

#[derive(Args)]
struct ImputeCategoryArgs {
    records: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArg,
    #[arg(long, env = "ENTIMPUTE_MODEL")]
    model: PathBuf,
    #[arg(long, env = "ENTIMPUTE_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BuildGazetteerArgs {
    gazetteer: PathBuf,
    /// Write the distinct entries, sorted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LocationArgs {
    records: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArg,
    #[arg(long, env = "ENTIMPUTE_GAZETTEER")]
    gazetteer: PathBuf,
    #[arg(long, env = "ENTIMPUTE_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Updated records; not used by validate-gazetteer.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Mock,
    Http,
}

#[derive(Args)]
struct GeocodeArgs {
    records: PathBuf,
    #[arg(long, value_enum, default_value = "mock")]
    provider: ProviderArg,
    /// Key file (key<TAB>quota). Required for http; mock defaults to one unlimited key.
    #[arg(long, env = "ENTIMPUTE_KEYS")]
    keys: Option<PathBuf>,
    /// HTTP provider settings: url, lon_path and lat_path as key = value lines.
    #[arg(long)]
    http_config: Option<PathBuf>,
    /// Requests per second per key; 0 disables the limit. Default 5 for http, unlimited for mock.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 1000)]
    backoff_ms: u64,
    /// Mock only: reject addresses naming fewer division levels.
    #[arg(long)]
    min_levels: Option<usize>,
    /// id, lon, lat, status table.
    #[arg(long)]
    output: PathBuf,
    /// Records with coordinates filled in.
    #[arg(long)]
    records_output: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    category: Option<String>,
    #[arg(long)]
    from_year: Option<i32>,
    #[arg(long)]
    to_year: Option<i32>,
}

impl FilterArgs {
    fn filter(&self) -> Result<ExportFilter> {
        let category = match &self.category {
            Some(c) => Some(
                c.parse::<Category>()
                    .map_err(|e| Error::Config(format!("category: {e}")))?,
            ),
            None => None,
        };
        Ok(ExportFilter {
            category,
            from_year: self.from_year,
            to_year: self.to_year,
        })
    }
}

#[derive(Args)]
struct KfunctionArgs {
    records: PathBuf,
    /// Comma-separated radii in kilometres.
    #[arg(long)]
    radii: String,
    #[command(flatten)]
    filter: FilterArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    records: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "ENTIMPUTE_CONFIG")]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. --set workers=4.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Comma-separated stages to skip.
    #[arg(long)]
    skip: Option<String>,
    #[arg(long, env = "ENTIMPUTE_CORPUS")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "ENTIMPUTE_LEXICON")]
    lexicon: Option<PathBuf>,
    #[arg(long, env = "ENTIMPUTE_GAZETTEER")]
    gazetteer: Option<PathBuf>,
    #[arg(long, env = "ENTIMPUTE_MODEL")]
    model: Option<PathBuf>,
    #[arg(long, env = "ENTIMPUTE_KEYS")]
    keys: Option<PathBuf>,
    #[arg(long, env = "ENTIMPUTE_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, env = "ENTIMPUTE_WORKERS")]
    workers: Option<usize>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_records(path: &Path) -> Result<Vec<EnterpriseRecord>> {
    let ingested = ingest(path)?;
    for d in &ingested.diagnostics {
        eprintln!("{}: {d}", path.display());
    }
    if !ingested.diagnostics.is_empty() {
        eprintln!("{}: {} malformed rows skipped", path.display(), ingested.diagnostics.len());
    }
    Ok(ingested.records)
}

fn load_tree(path: &Path) -> Result<AddressTree> {
    let (entries, diags) = load_entries(path)?;
    for d in &diags {
        eprintln!("{}: {d}", path.display());
    }
    Ok(build(entries))
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let records = load_records(&a.records)?;
    println!("{}", missingness(&records));
    if let Some(out) = a.output {
        save_records(&out, &records)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        records: a.records,
        seed: a.seed,
        lexicon_seed: a.lexicon_seed,
        ambiguity_rate: a.ambiguity_rate,
        province_omit_rate: a.province_omit_rate,
        missing: MissingRates {
            name: a.missing_name,
            category: a.missing_category,
            address: a.missing_address,
            postcode: a.missing_postcode,
            data_source: a.missing_data_source,
        },
        ..SynthConfig::default()
    };
    let s = synth(&config)?;
    write_synthetic(&a.out_dir, &s)?;
    eprintln!(
        "synth: {} records, {} gazetteer entries, {} lexicon words written to {}",
        s.records.len(),
        s.world.entries.len(),
        s.world.lexicon.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_segment(a: SegmentArgs) -> Result<()> {
    let lexicon = a.lexicon.load()?;
    let lines: Vec<String> = if a.text.is_empty() {
        io::stdin().lock().lines().collect::<io::Result<_>>()?
    } else {
        a.text
    };
    let mut out = output(None)?;
    writeln!(out, "line\ttoken\tpos")?;
    for (i, line) in lines.iter().enumerate() {
        for t in segment(line, &lexicon) {
            writeln!(out, "{}\t{}\t{}", i + 1, t.surface, t.pos)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_vectorize(a: VectorizeArgs) -> Result<()> {
    let lexicon = a.lexicon.load()?;
    let records = load_records(&a.records)?;
    let mut out = output(a.output.as_deref())?;
    for r in &records {
        if let Some(v) = record_vector(r, &lexicon, a.dim) {
            writeln!(out, "{}", dump_line(&r.id, r.category, &v))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn training_data(records: &Path, lexicon: &Lexicon, dim: usize) -> Result<Vec<entimpute::LabeledPoint>> {
    let records = load_records(records)?;
    Ok(records.iter().filter_map(|r| to_labeled(r, lexicon, dim)).collect())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let lexicon = a.lexicon.load()?;
    let data = training_data(&a.records, &lexicon, a.model.dim)?;
    let model = train(a.model.method.into(), &data, &a.model.params()?)?;
    model.save(&a.output)?;
    eprintln!("train: {} on {} labeled records -> {}", model.method(), data.len(), a.output.display());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let lexicon = a.lexicon.load()?;
    let data = training_data(&a.records, &lexicon, a.model.dim)?;
    let plan = kfold(data.len(), a.folds, a.model.seed)?;
    let report = cross_validate(a.model.method.into(), &data, &plan, &a.model.params()?)?;
    eprint!("{report}");
    print!("{}", report.to_tsv(a.timings));
    Ok(())
}

fn cmd_speedup(a: SpeedupArgs) -> Result<()> {
    let data = match (&a.records, a.synthetic) {
        (Some(p), _) => training_data(p, &a.lexicon.load()?, a.model.dim)?,
        (None, Some(n)) => labeled_points(n, a.model.dim, 50, a.model.seed),
        (None, None) => return Err(Error::Config("pass a record file or --synthetic N".into()).into()),
    };
    let curve = speedup(a.model.method.into(), &data, &a.worker_counts, &a.model.params()?, a.repeats)?;
    print!("{}", curve.to_tsv());
    Ok(())
}

fn cmd_impute_category(a: ImputeCategoryArgs) -> Result<()> {
    let lexicon = a.lexicon.load()?;
    let model = TrainedModel::load(&a.model)?;
    let mut records = load_records(&a.records)?;
    let report = impute_categories(&mut records, &model, &lexicon, a.workers.max(1))?;
    save_records(&a.output, &records)?;
    println!("category\tfilled");
    for c in Category::ALL {
        println!("{}\t{}", c.symbol(), report.filled_per_class[c.index()]);
    }
    println!("total_filled\t{}\nunfilled\t{}\nalready_present\t{}", report.filled, report.unfilled, report.already_present);
    Ok(())
}

fn cmd_build_gazetteer(a: BuildGazetteerArgs) -> Result<()> {
    let tree = load_tree(&a.gazetteer)?;
    println!("entries\t{}\nnodes\t{}", tree.len(), tree.node_count());
    if let Some(p) = a.output {
        let f = File::create(&p).with_context(|| format!("cannot create {}", p.display()))?;
        write_entries(BufWriter::new(f), tree.entries())?;
    }
    Ok(())
}

fn cmd_validate_gazetteer(a: LocationArgs) -> Result<()> {
    let lexicon = a.lexicon.load()?;
    let tree = load_tree(&a.gazetteer)?;
    let records = load_records(&a.records)?;
    println!("{}", validate(&tree, &records, &lexicon));
    Ok(())
}

fn cmd_impute_location(a: LocationArgs, stages: Stages) -> Result<()> {
    let Some(out) = &a.output else {
        return Err(Error::Config("--output is required".into()).into());
    };
    let lexicon = a.lexicon.load()?;
    let tree = load_tree(&a.gazetteer)?;
    let mut records = load_records(&a.records)?;
    let report = impute_locations(&mut records, &tree, &lexicon, stages, a.workers.max(1));
    save_records(out, &records)?;
    print!("{report}");
    Ok(())
}

fn http_provider(path: &Path) -> Result<HttpProvider> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut url = None;
    let mut provider = HttpProvider::new("", "/result/location/lng", "/result/location/lat");
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("{}: expected key = value, got `{line}`", path.display())).into());
        };
        match k.trim() {
            "url" => url = Some(v.trim().to_string()),
            "lon_path" => provider.lon_pointer = v.trim().to_string(),
            "lat_path" => provider.lat_pointer = v.trim().to_string(),
            "timeout_secs" => {
                let secs = v.trim().parse().map_err(|_| Error::Config(format!("invalid timeout `{}`", v.trim())))?;
                provider.timeout = Duration::from_secs(secs);
            }
            other => return Err(Error::Config(format!("{}: unknown key `{other}`", path.display())).into()),
        }
    }
    provider.url_template = url.ok_or_else(|| Error::Config(format!("{}: url is required", path.display())))?;
    Ok(provider)
}

fn cmd_geocode(a: GeocodeArgs) -> Result<()> {
    let keys: Vec<Arc<ApiKey>> = match (&a.keys, a.provider) {
        (Some(p), _) => load_keys(p)?.into_iter().map(Arc::new).collect(),
        (None, ProviderArg::Mock) => vec![Arc::new(ApiKey::new("local", u32::MAX))],
        (None, ProviderArg::Http) => return Err(Error::Config("--keys is required for the http provider".into()).into()),
    };
    let provider: Box<dyn GeocodeProvider> = match a.provider {
        ProviderArg::Mock => Box::new(match a.min_levels {
            Some(n) => MockProvider::with_filter(n),
            None => MockProvider::new(),
        }),
        ProviderArg::Http => {
            let path = a
                .http_config
                .as_deref()
                .ok_or_else(|| Error::Config("--http-config is required for the http provider".into()))?;
            Box::new(http_provider(path)?)
        }
    };
    let rate = match (a.rate, a.provider) {
        (Some(r), _) if r > 0.0 => Some(r),
        (Some(_), _) | (None, ProviderArg::Mock) => None,
        (None, ProviderArg::Http) => Some(5.0),
    };
    let config = BatchConfig {
        rate,
        retries: a.retries,
        backoff: Duration::from_millis(a.backoff_ms),
        ..BatchConfig::default()
    };
    let mut records = load_records(&a.records)?;
    let (summary, results) = geocode_records(&mut records, &keys, provider.as_ref(), &config)?;
    let mut out = output(Some(&a.output))?;
    write_results(&mut out, &results)?;
    out.flush()?;
    if let Some(p) = a.records_output {
        save_records(&p, &records)?;
    }
    eprintln!("{summary}");
    Ok(())
}

fn cmd_kfunction(a: KfunctionArgs) -> Result<()> {
    let records = load_records(&a.records)?;
    let (selected, summary) = select(&records, &a.filter.filter()?);
    let coords: Vec<_> = selected.iter().filter_map(|r| r.coordinates).collect();
    let points = PointSet::from_coordinates(&coords);
    let curve = ripley_k(&points, &parse_radii(&a.radii)?)?;
    let mut out = output(a.output.as_deref())?;
    write!(out, "{}", curve.to_tsv())?;
    out.flush()?;
    eprintln!(
        "kfunction: {} points, study area {:.1} km2, {} filtered out, {} without coordinates",
        points.len(),
        points.area().area(),
        summary.filtered_out,
        summary.without_coordinates
    );
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let records = load_records(&a.records)?;
    let s = write_geojson(&a.output, &records, &a.filter.filter()?)?;
    eprintln!(
        "export: {} features, {} filtered out, {} skipped without coordinates",
        s.exported, s.filtered_out, s.without_coordinates
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let cwd = Path::new(".");
    let paths = [
        ("corpus", &a.corpus),
        ("lexicon", &a.lexicon),
        ("gazetteer", &a.gazetteer),
        ("model", &a.model),
        ("keys", &a.keys),
        ("out_dir", &a.out_dir),
    ];
    for (key, value) in paths {
        if let Some(p) = value {
            config.set(key, &p.to_string_lossy(), cwd)?;
        }
    }
    if let Some(w) = a.workers {
        config.set("workers", &w.to_string(), cwd)?;
    }
    for o in &a.overrides {
        let Some((k, v)) = o.split_once('=') else {
            return Err(Error::Config(format!("--set expects KEY=VALUE, got `{o}`")).into());
        };
        config.set(k, v, cwd)?;
    }
    if let Some(skip) = &a.skip {
        config.set("skip", skip, cwd)?;
    }
    let outcome = run_pipeline(&config, &mut io::stderr())?;
    print!("{}", outcome.provenance);
    eprintln!("run: {} stages, {} values filled", outcome.stages_run.len(), outcome.modifications);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Vectorize(a) => cmd_vectorize(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Speedup(a) => cmd_speedup(a),
        Command::ImputeCategory(a) => cmd_impute_category(a),
        Command::BuildGazetteer(a) => cmd_build_gazetteer(a),
        Command::ValidateGazetteer(a) => cmd_validate_gazetteer(a),
        Command::ImputePostcode(a) => cmd_impute_location(a, Stages::POSTCODE),
        Command::ImputeAd(a) => cmd_impute_location(a, Stages::AD),
        Command::ImputeLocation(a) => cmd_impute_location(a, Stages::ALL),
        Command::Geocode(a) => cmd_geocode(a),
        Command::Kfunction(a) => cmd_kfunction(a),
        Command::Export(a) => cmd_export(a),
        Command::Run(a) => cmd_run(a),
    }
}

const EXIT_STAGE_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::UnknownMethod(_) | Error::NoKeys | Error::TooFewRecords { .. })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<StageError>() {
        // configuration problems surface before the first stage runs
        return if is_config_error(&e.source) { EXIT_CONFIG } else { EXIT_STAGE_FAILURE };
    }
    match err.downcast_ref::<Error>() {
        Some(e) if is_config_error(e) => EXIT_CONFIG,
        _ => EXIT_STAGE_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_errors_map_to_exit_2() {
        assert_eq!(exit_code(&Error::Config("x".into()).into()), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::EmptyTrainingData.into()), EXIT_STAGE_FAILURE);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), EXIT_STAGE_FAILURE);
    }
}
