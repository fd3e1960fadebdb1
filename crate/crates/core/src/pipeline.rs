//! End-to-end run: ingest, train or load a model, impute categories, build the
//! gazetteer, impute locations, geocode, and reconcile provenance.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::classify::{impute_categories, train, Method, TrainParams, TrainedModel};
use crate::corpus::{ingest, missingness, save_records, EnterpriseRecord, Origin};
use crate::error::{Error, Result};
use crate::gazetteer::{build, load_entries, validate};
use crate::geocode::{geocode_records, load_keys, write_results, ApiKey, BatchConfig, GeocodeProvider, HttpProvider, MockProvider};
use crate::locimpute::{impute_locations, Stages};
use crate::segmenter::Lexicon;
use crate::vectorizer::{to_labeled, DEFAULT_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Train,
    ImputeCategory,
    BuildGazetteer,
    ImputeLocation,
    Geocode,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Train,
        Stage::ImputeCategory,
        Stage::BuildGazetteer,
        Stage::ImputeLocation,
        Stage::Geocode,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Train => "train",
            Stage::ImputeCategory => "impute-category",
            Stage::BuildGazetteer => "build-gazetteer",
            Stage::ImputeLocation => "impute-location",
            Stage::Geocode => "geocode",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    /// Bundled demo lexicon when absent.
    pub lexicon: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    /// Load this model instead of training one.
    pub model: Option<PathBuf>,
    /// A single unlimited key is used when absent; only sensible with the mock provider.
    pub keys: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub method: Method,
    pub params: TrainParams,
    pub dim: usize,
    pub workers: usize,
    pub seed: u64,
    pub provider: ProviderKind,
    /// Requests per second per key. `None` means the provider default:
    /// unlimited for the mock, 5/s for HTTP.
    pub rate: Option<f64>,
    pub unlimited_rate: bool,
    pub retries: u32,
    pub backoff: Duration,
    pub mock_min_levels: Option<usize>,
    pub http_url: Option<String>,
    pub http_lon_path: String,
    pub http_lat_path: String,
    pub skip: BTreeSet<Stage>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            lexicon: None,
            gazetteer: None,
            model: None,
            keys: None,
            out_dir: PathBuf::from("out"),
            method: Method::LogisticRegression,
            params: TrainParams::default(),
            dim: DEFAULT_DIM,
            workers: 1,
            seed: 0,
            provider: ProviderKind::Mock,
            rate: None,
            unlimited_rate: false,
            retries: 3,
            backoff: Duration::from_secs(1),
            mock_min_levels: None,
            http_url: None,
            http_lon_path: "/result/location/lng".into(),
            http_lat_path: "/result/location/lat".into(),
            skip: BTreeSet::new(),
        }
    }
}

/// Keys understood by the config file and by `--set key=value` overrides.
pub const CONFIG_KEYS: [&str; 24] = [
    "corpus",
    "lexicon",
    "gazetteer",
    "model",
    "keys",
    "out_dir",
    "method",
    "dim",
    "workers",
    "seed",
    "nb.alpha",
    "lr.iters",
    "lr.step",
    "lr.l2",
    "forest.trees",
    "geocode.provider",
    "geocode.rate",
    "geocode.retries",
    "geocode.backoff_ms",
    "geocode.min_levels",
    "geocode.url",
    "geocode.lon_path",
    "geocode.lat_path",
    "skip",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: invalid value `{value}`")))
}

impl PipelineConfig {
    /// Applies one `key = value` setting. Relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let value = value.trim();
        let path = || {
            let p = PathBuf::from(value);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let optional = |v: &str| if v.is_empty() { None } else { Some(path()) };
        match key.trim() {
            "corpus" => self.corpus = optional(value),
            "lexicon" => self.lexicon = optional(value),
            "gazetteer" => self.gazetteer = optional(value),
            "model" => self.model = optional(value),
            "keys" => self.keys = optional(value),
            "out_dir" => self.out_dir = path(),
            "method" => self.method = value.parse()?,
            "dim" => self.dim = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "seed" => {
                self.seed = parse(key, value)?;
                self.params.forest.seed = self.seed;
            }
            "nb.alpha" => self.params.nb_alpha = parse(key, value)?,
            "lr.iters" => self.params.lr.iters = parse(key, value)?,
            "lr.step" => self.params.lr.step = parse(key, value)?,
            "lr.l2" => self.params.lr.l2 = parse(key, value)?,
            "forest.trees" => self.params.forest.num_trees = parse(key, value)?,
            "geocode.provider" => {
                self.provider = match value {
                    "mock" => ProviderKind::Mock,
                    "http" => ProviderKind::Http,
                    _ => return Err(Error::Config(format!("{key}: expected mock or http, got `{value}`"))),
                }
            }
            "geocode.rate" => match value {
                "none" | "0" => {
                    self.rate = None;
                    self.unlimited_rate = true;
                }
                _ => {
                    self.rate = Some(parse(key, value)?);
                    self.unlimited_rate = false;
                }
            },
            "geocode.retries" => self.retries = parse(key, value)?,
            "geocode.backoff_ms" => self.backoff = Duration::from_millis(parse(key, value)?),
            "geocode.min_levels" => {
                self.mock_min_levels = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "geocode.url" => self.http_url = Some(value.to_string()),
            "geocode.lon_path" => self.http_lon_path = value.to_string(),
            "geocode.lat_path" => self.http_lat_path = value.to_string(),
            "skip" => {
                self.skip = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse(text: &str, base: &Path) -> Result<PipelineConfig> {
        let mut c = PipelineConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            c.set(k, v, base).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::parse(&text, base)
    }

    pub fn runs(&self, stage: Stage) -> bool {
        !self.skip.contains(&stage)
    }

    /// Checks what can be checked before any stage runs.
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if self.skip.contains(&Stage::Ingest) {
            return Err(Error::Config("the ingest stage cannot be skipped".into()));
        }
        let corpus = self.corpus.as_ref().ok_or_else(|| Error::Config("corpus path is required".into()))?;
        let mut required = vec![("corpus", corpus)];
        if let Some(p) = &self.lexicon {
            required.push(("lexicon", p));
        }
        if let Some(p) = &self.model {
            required.push(("model", p));
        }
        if let Some(p) = &self.keys {
            required.push(("keys", p));
        }
        let needs_gazetteer = self.runs(Stage::BuildGazetteer) || self.runs(Stage::ImputeLocation);
        match &self.gazetteer {
            Some(p) => required.push(("gazetteer", p)),
            None if needs_gazetteer => return Err(Error::Config("gazetteer path is required".into())),
            None => {}
        }
        for (what, p) in required {
            if !p.exists() {
                return Err(Error::Config(format!("{what} file {} does not exist", p.display())));
            }
        }
        if self.provider == ProviderKind::Http && self.runs(Stage::Geocode) {
            if self.http_url.is_none() {
                return Err(Error::Config("geocode.url is required for the http provider".into()));
            }
            if self.keys.is_none() {
                return Err(Error::Config("a key file is required for the http provider".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

/// Present values split by provenance, plus absent ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FieldTally {
    pub original: usize,
    pub imputed: usize,
    pub failed: usize,
}

impl FieldTally {
    pub fn total(&self) -> usize {
        self.original + self.imputed + self.failed
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProvenanceReport {
    pub records: usize,
    pub category: FieldTally,
    pub postcode: FieldTally,
    pub location: FieldTally,
    pub coordinates: FieldTally,
}

fn tally<T>(records: &[EnterpriseRecord], field: impl Fn(&EnterpriseRecord) -> (Option<&T>, Origin)) -> FieldTally {
    let mut t = FieldTally::default();
    for r in records {
        match field(r) {
            (None, _) => t.failed += 1,
            (Some(_), Origin::Original) => t.original += 1,
            (Some(_), Origin::Imputed) => t.imputed += 1,
        }
    }
    t
}

impl ProvenanceReport {
    pub fn of(records: &[EnterpriseRecord]) -> Self {
        ProvenanceReport {
            records: records.len(),
            category: tally(records, |r| (r.category.as_ref(), r.provenance.category)),
            postcode: tally(records, |r| (r.postcode.as_ref(), r.provenance.postcode)),
            location: tally(records, |r| (r.location.as_ref(), r.provenance.location)),
            coordinates: tally(records, |r| (r.coordinates.as_ref(), r.provenance.coordinates)),
        }
    }

    pub fn fields(&self) -> [(&'static str, FieldTally); 4] {
        [
            ("category", self.category),
            ("postcode", self.postcode),
            ("location", self.location),
            ("coordinates", self.coordinates),
        ]
    }

    pub fn reconciles(&self) -> bool {
        self.fields().iter().all(|(_, t)| t.total() == self.records)
    }
}

impl fmt::Display for ProvenanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "field\toriginal\timputed\tfailed\ttotal")?;
        for (name, t) in self.fields() {
            writeln!(f, "{name}\t{}\t{}\t{}\t{}", t.original, t.imputed, t.failed, t.total())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutcome {
    pub records: Vec<EnterpriseRecord>,
    pub stages_run: Vec<Stage>,
    /// Field values filled by this run, over all stages.
    pub modifications: usize,
    pub provenance: ProvenanceReport,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

struct Runner<'a> {
    log: &'a mut dyn Write,
}

impl Runner<'_> {
    fn stage<T>(&mut self, stage: Stage, count: impl Fn(&T) -> usize, f: impl FnOnce() -> Result<T>) -> Result<T, StageError> {
        let start = Instant::now();
        let out = f().map_err(|source| StageError { stage, source })?;
        let _ = writeln!(
            self.log,
            "stage={} records={} duration_ms={}",
            stage,
            count(&out),
            start.elapsed().as_millis()
        );
        Ok(out)
    }
}

/// Runs every stage not listed in `config.skip`, writing artifacts to
/// `config.out_dir` and one summary line per stage to `log`.
pub fn run_pipeline(config: &PipelineConfig, log: &mut dyn Write) -> Result<PipelineOutcome, StageError> {
    config.validate().map_err(|source| StageError {
        stage: Stage::Ingest,
        source,
    })?;
    let mut run = Runner { log };
    let mut outcome = PipelineOutcome::default();
    let workers = config.workers;

    let mut records = run.stage(Stage::Ingest, Vec::len, || {
        fs::create_dir_all(&config.out_dir).map_err(|source| Error::Write {
            path: config.out_dir.clone(),
            source,
        })?;
        let ingested = ingest(config.corpus.as_deref().expect("validated"))?;
        let mut diag = String::from("line\tmessage\n");
        for d in &ingested.diagnostics {
            diag.push_str(&format!("{}\t{}\n", d.line, d.message.replace(['\t', '\n'], " ")));
        }
        write_file(&run_out(config, "diagnostics.tsv"), diag)?;
        write_file(&run_out(config, "missingness.tsv"), format!("{}\n", missingness(&ingested.records)))?;
        Ok(ingested.records)
    })?;
    outcome.stages_run.push(Stage::Ingest);

    let lexicon = match &config.lexicon {
        Some(p) => Lexicon::load(p).map_err(|source| StageError {
            stage: Stage::Ingest,
            source,
        })?,
        None => Lexicon::demo(),
    };

    let mut model: Option<TrainedModel> = None;
    if config.runs(Stage::Train) {
        let (m, _) = run.stage(Stage::Train, |(_, n): &(TrainedModel, usize)| *n, || {
            let (m, n) = match &config.model {
                Some(p) => (TrainedModel::load(p)?, 0),
                None => {
                    let data: Vec<_> = records.iter().filter_map(|r| to_labeled(r, &lexicon, config.dim)).collect();
                    let params = TrainParams {
                        workers,
                        ..config.params
                    };
                    (train(config.method, &data, &params)?, data.len())
                }
            };
            m.save(&run_out(config, "model.json"))?;
            Ok((m, n))
        })?;
        model = Some(m);
        outcome.stages_run.push(Stage::Train);
    } else if let Some(p) = &config.model {
        model = Some(TrainedModel::load(p).map_err(|source| StageError {
            stage: Stage::Train,
            source,
        })?);
    }

    if config.runs(Stage::ImputeCategory) {
        let report = run.stage(Stage::ImputeCategory, |r: &crate::classify::CategoryImputation| r.filled, || {
            let m = model
                .as_ref()
                .ok_or_else(|| Error::Config("no model: enable the train stage or set `model`".into()))?;
            let report = impute_categories(&mut records, m, &lexicon, workers)?;
            let mut s = String::from("category\tfilled\n");
            for c in crate::category::Category::ALL {
                s.push_str(&format!("{}\t{}\n", c.symbol(), report.filled_per_class[c.index()]));
            }
            s.push_str(&format!(
                "total_filled\t{}\nunfilled\t{}\nalready_present\t{}\n",
                report.filled, report.unfilled, report.already_present
            ));
            write_file(&run_out(config, "category_report.tsv"), s)?;
            save_records(&run_out(config, "records.category.tsv"), &records)?;
            Ok(report)
        })?;
        outcome.modifications += report.filled;
        outcome.stages_run.push(Stage::ImputeCategory);
    }

    let mut tree = None;
    if config.runs(Stage::BuildGazetteer) || config.runs(Stage::ImputeLocation) {
        let gazetteer = config.gazetteer.as_deref().expect("validated");
        let t = run.stage(Stage::BuildGazetteer, |t: &crate::gazetteer::AddressTree| t.len(), || {
            let (entries, diags) = load_entries(gazetteer)?;
            let t = build(entries);
            if config.runs(Stage::BuildGazetteer) {
                let coverage = validate(&t, &records, &lexicon);
                write_file(
                    &run_out(config, "gazetteer_coverage.tsv"),
                    format!("{coverage}\ninvalid_rows\t{}\t\n", diags.len()),
                )?;
            }
            Ok(t)
        })?;
        tree = Some(t);
        if config.runs(Stage::BuildGazetteer) {
            outcome.stages_run.push(Stage::BuildGazetteer);
        }
    }

    if config.runs(Stage::ImputeLocation) {
        let t = tree.as_ref().expect("built above");
        let report = run.stage(Stage::ImputeLocation, |r: &crate::locimpute::LocationReport| r.records, || {
            let report = impute_locations(&mut records, t, &lexicon, Stages::ALL, workers);
            write_file(&run_out(config, "location_report.tsv"), report.to_string())?;
            save_records(&run_out(config, "records.location.tsv"), &records)?;
            Ok(report)
        })?;
        outcome.modifications += report.postcode_filled + report.location_filled;
        outcome.stages_run.push(Stage::ImputeLocation);
    }

    if config.runs(Stage::Geocode) {
        let summary = run.stage(Stage::Geocode, |s: &crate::geocode::GeocodeSummary| s.total, || {
            let keys: Vec<Arc<ApiKey>> = match &config.keys {
                Some(p) => load_keys(p)?.into_iter().map(Arc::new).collect(),
                None => vec![Arc::new(ApiKey::new("local", u32::MAX))],
            };
            let provider: Box<dyn GeocodeProvider> = match config.provider {
                ProviderKind::Mock => Box::new(MockProvider {
                    filter: config.mock_min_levels.map(|min_levels| crate::geocode::AmbiguityFilter { min_levels }),
                }),
                ProviderKind::Http => Box::new(HttpProvider::new(
                    config.http_url.clone().expect("validated"),
                    config.http_lon_path.clone(),
                    config.http_lat_path.clone(),
                )),
            };
            let rate = match (config.rate, config.unlimited_rate, config.provider) {
                (Some(r), _, _) => Some(r),
                (None, true, _) | (None, false, ProviderKind::Mock) => None,
                (None, false, ProviderKind::Http) => Some(5.0),
            };
            let batch = BatchConfig {
                rate,
                retries: config.retries,
                backoff: config.backoff,
                ..BatchConfig::default()
            };
            let (summary, results) = geocode_records(&mut records, &keys, provider.as_ref(), &batch)?;
            let mut buf = Vec::new();
            write_results(&mut buf, &results)?;
            write_file(&run_out(config, "geocode.tsv"), buf)?;
            write_file(&run_out(config, "geocode_report.txt"), format!("{summary}\n"))?;
            Ok(summary)
        })?;
        outcome.modifications += summary.ok;
        outcome.stages_run.push(Stage::Geocode);
    }

    outcome.provenance = ProvenanceReport::of(&records);
    if config.runs(Stage::Report) {
        let prov = &outcome.provenance;
        run.stage(Stage::Report, |_: &()| records.len(), || {
            write_file(&run_out(config, "provenance.tsv"), prov.to_string())?;
            save_records(&run_out(config, "records.tsv"), &records)?;
            Ok(())
        })?;
        outcome.stages_run.push(Stage::Report);
    }
    outcome.records = records;
    Ok(outcome)
}

fn run_out(config: &PipelineConfig, name: &str) -> PathBuf {
    config.out_dir.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_values() {
        let c = PipelineConfig::parse(
            "# run\ncorpus = data/records.tsv\nmethod = nb\nworkers = 4\nskip = geocode, report\ngeocode.rate = none\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(c.corpus, Some(PathBuf::from("/base/data/records.tsv")));
        assert_eq!(c.method, Method::NaiveBayes);
        assert_eq!(c.workers, 4);
        assert_eq!(c.skip, BTreeSet::from([Stage::Geocode, Stage::Report]));
        assert!(c.unlimited_rate && c.rate.is_none());
    }

    #[test]
    fn rejects_bad_settings() {
        let base = Path::new(".");
        assert!(PipelineConfig::parse("colour = red", base).is_err());
        assert!(PipelineConfig::parse("workers = many", base).is_err());
        assert!(PipelineConfig::parse("just a line", base).is_err());
        assert!(PipelineConfig::parse("skip = everything", base).is_err());
        let c = PipelineConfig {
            workers: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(PipelineConfig::default().validate().is_err());
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let base = Path::new(".");
        for k in CONFIG_KEYS {
            let v = match k {
                "method" => "nb",
                "geocode.provider" => "mock",
                "skip" => "geocode",
                "geocode.url" | "geocode.lon_path" | "geocode.lat_path" => "/x",
                k if k.contains('.') || ["dim", "workers", "seed"].contains(&k) => "1",
                _ => "file.tsv",
            };
            let mut c = PipelineConfig::default();
            c.set(k, v, base).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }

    #[test]
    fn tallies_reconcile() {
        let mut a = EnterpriseRecord::new("a");
        a.category = Some(crate::category::Category::RE);
        let mut b = EnterpriseRecord::new("b");
        b.category = Some(crate::category::Category::M);
        b.provenance.category = Origin::Imputed;
        let c = EnterpriseRecord::new("c");
        let p = ProvenanceReport::of(&[a, b, c]);
        assert_eq!(p.category, FieldTally { original: 1, imputed: 1, failed: 1 });
        assert!(p.reconciles());
    }
}
