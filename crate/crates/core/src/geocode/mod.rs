//! Address geocoding with per-key daily quotas and sharded dispatch.

mod keys;
mod provider;
mod ratelimit;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use chrono::NaiveDate;

pub use keys::{load_keys, parse_keys, ApiKey};
pub use provider::{
    mock_coordinates, split_division, AmbiguityFilter, GeocodeProvider, HttpProvider, MockProvider, ProviderError,
    DIVISION_SUFFIXES, LAT_RANGE, LON_RANGE, STREET_SPREAD,
};
pub use ratelimit::TokenBucket;

use crate::corpus::{Coordinates, EnterpriseRecord, Origin};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeocodeStatus {
    Ok,
    NoResult,
    QuotaExhausted,
    ProviderError,
}

impl GeocodeStatus {
    pub const ALL: [GeocodeStatus; 4] = [
        GeocodeStatus::Ok,
        GeocodeStatus::NoResult,
        GeocodeStatus::QuotaExhausted,
        GeocodeStatus::ProviderError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GeocodeStatus::Ok => "ok",
            GeocodeStatus::NoResult => "no-result",
            GeocodeStatus::QuotaExhausted => "quota-exhausted",
            GeocodeStatus::ProviderError => "provider-error",
        }
    }
}

impl fmt::Display for GeocodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeocodeStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        GeocodeStatus::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown geocode status `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeocodeRequest {
    pub id: String,
    pub address: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeocodeResult {
    pub id: String,
    /// Present iff `status` is `Ok`.
    pub coordinates: Option<Coordinates>,
    pub status: GeocodeStatus,
    pub provider: String,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct Shard<'a> {
    pub index: usize,
    /// Offset of the first request in the full batch.
    pub start: usize,
    pub requests: &'a [GeocodeRequest],
    pub key: Arc<ApiKey>,
}

/// Splits the batch into one contiguous slice per key, sizes differing by at most one.
pub fn shard<'a>(requests: &'a [GeocodeRequest], keys: &[Arc<ApiKey>]) -> Result<Vec<Shard<'a>>> {
    if keys.is_empty() {
        return Err(Error::NoKeys);
    }
    Ok(crate::partition::even_ranges(requests.len(), keys.len())
        .into_iter()
        .enumerate()
        .map(|(i, r)| Shard {
            index: i,
            start: r.start,
            requests: &requests[r],
            key: Arc::clone(&keys[i]),
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
pub struct BatchConfig {
    /// Requests per second per key; `None` disables rate limiting.
    pub rate: Option<f64>,
    pub retries: u32,
    /// First backoff delay; doubles after every failed attempt.
    pub backoff: Duration,
    /// Supplies the day stamp used for quota accounting.
    pub today: fn() -> NaiveDate,
}

pub fn local_today() -> NaiveDate {
    chrono::Local::now().date_naive()
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            rate: Some(5.0),
            retries: 3,
            backoff: Duration::from_secs(1),
            today: local_today,
        }
    }
}

fn run_shard(shard: &Shard<'_>, provider: &dyn GeocodeProvider, config: &BatchConfig) -> Vec<GeocodeResult> {
    let bucket = config.rate.filter(|r| *r > 0.0).map(TokenBucket::new);
    let mut exhausted = false;
    shard
        .requests
        .iter()
        .map(|req| {
            let mut result = GeocodeResult {
                id: req.id.clone(),
                coordinates: None,
                status: GeocodeStatus::NoResult,
                provider: provider.name().to_string(),
                attempts: 0,
            };
            if exhausted {
                result.status = GeocodeStatus::QuotaExhausted;
                return result;
            }
            if req.address.trim().is_empty() {
                return result;
            }
            let mut delay = config.backoff;
            loop {
                if !shard.key.try_acquire((config.today)()) {
                    exhausted = true;
                    result.status = GeocodeStatus::QuotaExhausted;
                    break;
                }
                if let Some(b) = &bucket {
                    b.acquire();
                }
                result.attempts += 1;
                match provider.geocode(&req.address, shard.key.id()) {
                    Ok(Some(c)) => {
                        result.coordinates = Some(c);
                        result.status = GeocodeStatus::Ok;
                        break;
                    }
                    Ok(None) => break,
                    Err(ProviderError::Transient(_)) if result.attempts <= config.retries => {
                        thread::sleep(delay);
                        delay *= 2;
                    }
                    Err(_) => {
                        result.status = GeocodeStatus::ProviderError;
                        break;
                    }
                }
            }
            result
        })
        .collect()
}

/// Geocodes every shard on its own thread. Results come back in batch order,
/// one per request.
pub fn geocode_batch(shards: &[Shard<'_>], provider: &dyn GeocodeProvider, config: &BatchConfig) -> Vec<GeocodeResult> {
    let mut per_shard: Vec<(usize, Vec<GeocodeResult>)> = thread::scope(|s| {
        let handles: Vec<_> = shards
            .iter()
            .map(|sh| s.spawn(move || (sh.start, run_shard(sh, provider, config))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("geocode worker panicked")).collect()
    });
    per_shard.sort_by_key(|(start, _)| *start);
    per_shard.into_iter().flat_map(|(_, r)| r).collect()
}

pub fn write_results<W: Write>(mut w: W, results: &[GeocodeResult]) -> std::io::Result<()> {
    writeln!(w, "id\tlon\tlat\tstatus")?;
    for r in results {
        match r.coordinates {
            Some(c) => writeln!(w, "{}\t{}\t{}\t{}", r.id, c.lon, c.lat, r.status)?,
            None => writeln!(w, "{}\t\t\t{}", r.id, r.status)?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GeocodeSummary {
    pub total: usize,
    pub ok: usize,
    pub no_result: usize,
    pub quota_exhausted: usize,
    pub provider_error: usize,
    /// Records that already had coordinates and were not sent.
    pub skipped: usize,
}

impl GeocodeSummary {
    pub fn from_results(results: &[GeocodeResult]) -> Self {
        let mut s = GeocodeSummary {
            total: results.len(),
            ..Default::default()
        };
        for r in results {
            match r.status {
                GeocodeStatus::Ok => s.ok += 1,
                GeocodeStatus::NoResult => s.no_result += 1,
                GeocodeStatus::QuotaExhausted => s.quota_exhausted += 1,
                GeocodeStatus::ProviderError => s.provider_error += 1,
            }
        }
        s
    }

    /// Share of sent requests that came back with coordinates.
    pub fn ok_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.ok as f64 / self.total as f64
        }
    }
}

impl fmt::Display for GeocodeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "geocode: {} sent, {} ok ({:.4}), {} no-result, {} quota-exhausted, {} provider-error, {} skipped",
            self.total,
            self.ok,
            self.ok_rate(),
            self.no_result,
            self.quota_exhausted,
            self.provider_error,
            self.skipped
        )
    }
}

/// The address a record would be geocoded with: the imputed full address if
/// there is one, the raw address otherwise.
pub fn assembled_address(record: &EnterpriseRecord) -> Option<&str> {
    record
        .location
        .as_ref()
        .map(|l| l.full_address.as_str())
        .or(record.address.as_deref())
        .filter(|a| !a.trim().is_empty())
}

/// Geocodes every record without coordinates and writes the outcome back.
pub fn geocode_records(
    records: &mut [EnterpriseRecord],
    keys: &[Arc<ApiKey>],
    provider: &dyn GeocodeProvider,
    config: &BatchConfig,
) -> Result<(GeocodeSummary, Vec<GeocodeResult>)> {
    let mut slots = Vec::new();
    let mut requests = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.coordinates.is_some() {
            continue;
        }
        slots.push(i);
        requests.push(GeocodeRequest {
            id: r.id.clone(),
            address: assembled_address(r).unwrap_or_default().to_string(),
        });
    }
    let skipped = records.len() - requests.len();
    let results = geocode_batch(&shard(&requests, keys)?, provider, config);
    for (&i, res) in slots.iter().zip(&results) {
        let rec = &mut records[i];
        rec.geocode_status = Some(res.status);
        if let Some(c) = res.coordinates {
            rec.coordinates = Some(c);
            rec.provenance.coordinates = Origin::Imputed;
        }
    }
    let mut summary = GeocodeSummary::from_results(&results);
    summary.skipped = skipped;
    Ok((summary, results))
}
