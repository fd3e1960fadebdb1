use std::time::Duration;

use crate::corpus::Coordinates;
use crate::vectorizer::fnv1a_64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// Worth retrying: timeouts, throttling, server errors.
    Transient(String),
    Hard(String),
}

pub trait GeocodeProvider: Send + Sync {
    fn name(&self) -> &str;

    /// `Ok(None)` when the provider has no result for the address.
    fn geocode(&self, address: &str, key: &str) -> Result<Option<Coordinates>, ProviderError>;
}

pub const LON_RANGE: (f64, f64) = (73.0, 135.0);
pub const LAT_RANGE: (f64, f64) = (18.0, 54.0);
/// Largest offset of a street from its division's base point, in degrees.
pub const STREET_SPREAD: f64 = 0.05;

/// Suffix characters that close an administrative-division name.
pub const DIVISION_SUFFIXES: [char; 7] = ['省', '市', '区', '县', '州', '盟', '旗'];

/// Splits an address after its last division suffix.
pub fn split_division(address: &str) -> (&str, &str) {
    match address.char_indices().rev().find(|(_, c)| DIVISION_SUFFIXES.contains(c)) {
        Some((i, c)) => address.split_at(i + c.len_utf8()),
        None => ("", address),
    }
}

fn unit(h: u32) -> f64 {
    f64::from(h) / 4_294_967_296.0
}

/// Deterministic stand-in for a geocoding service. The division prefix picks a
/// base point inside China's bounding box; the street part moves it by at most
/// `STREET_SPREAD` degrees.
pub fn mock_coordinates(address: &str) -> Option<Coordinates> {
    if address.trim().is_empty() {
        return None;
    }
    let (division, street) = split_division(address);
    let base = if division.is_empty() { address } else { division };
    let h = fnv1a_64(base.as_bytes());
    let m = STREET_SPREAD;
    let mut lon = LON_RANGE.0 + m + unit((h >> 32) as u32) * (LON_RANGE.1 - LON_RANGE.0 - 2.0 * m);
    let mut lat = LAT_RANGE.0 + m + unit(h as u32) * (LAT_RANGE.1 - LAT_RANGE.0 - 2.0 * m);
    if !division.is_empty() && !street.is_empty() {
        let g = fnv1a_64(street.as_bytes());
        let r = unit((g >> 32) as u32) * m;
        let theta = unit(g as u32) * std::f64::consts::TAU;
        lon += r * theta.cos();
        lat += r * theta.sin();
    }
    Some(Coordinates { lon, lat })
}

/// Rejects addresses whose division prefix names fewer than `min_levels` divisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmbiguityFilter {
    pub min_levels: usize,
}

impl AmbiguityFilter {
    pub fn accepts(&self, address: &str) -> bool {
        let (division, _) = split_division(address);
        division.chars().filter(|c| DIVISION_SUFFIXES.contains(c)).count() >= self.min_levels
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    pub filter: Option<AmbiguityFilter>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_filter(min_levels: usize) -> Self {
        MockProvider {
            filter: Some(AmbiguityFilter { min_levels }),
        }
    }
}

impl GeocodeProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn geocode(&self, address: &str, _key: &str) -> Result<Option<Coordinates>, ProviderError> {
        if self.filter.is_some_and(|f| !f.accepts(address)) {
            return Ok(None);
        }
        Ok(mock_coordinates(address))
    }
}

/// Generic JSON-over-HTTP geocoder. `{address}` and `{key}` in the URL template
/// are replaced with the percent-encoded address and the API key; coordinates
/// are read with JSON pointers such as `/result/location/lng`.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    pub url_template: String,
    pub lon_pointer: String,
    pub lat_pointer: String,
    pub timeout: Duration,
}

impl HttpProvider {
    pub fn new(url_template: impl Into<String>, lon_pointer: impl Into<String>, lat_pointer: impl Into<String>) -> Self {
        HttpProvider {
            url_template: url_template.into(),
            lon_pointer: lon_pointer.into(),
            lat_pointer: lat_pointer.into(),
            timeout: Duration::from_secs(10),
        }
    }

    pub fn url(&self, address: &str, key: &str) -> String {
        let enc = |s: &str| url::form_urlencoded::byte_serialize(s.as_bytes()).collect::<String>();
        self.url_template
            .replace("{address}", &enc(address))
            .replace("{key}", &enc(key))
    }

    fn coordinates(&self, body: &serde_json::Value) -> Option<Coordinates> {
        let num = |p: &str| {
            let v = body.pointer(p)?;
            v.as_f64().or_else(|| v.as_str()?.parse().ok())
        };
        let lon = num(&self.lon_pointer)?;
        let lat = num(&self.lat_pointer)?;
        ((-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat)).then_some(Coordinates { lon, lat })
    }
}

impl GeocodeProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn geocode(&self, address: &str, key: &str) -> Result<Option<Coordinates>, ProviderError> {
        let resp = ureq::get(&self.url(address, key)).timeout(self.timeout).call();
        let resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                return Err(ProviderError::Transient(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) => return Err(ProviderError::Hard(format!("HTTP {code}"))),
            Err(e) => return Err(ProviderError::Transient(e.to_string())),
        };
        let body: serde_json::Value = serde_json::from_reader(resp.into_reader())
            .map_err(|e| ProviderError::Hard(format!("invalid JSON: {e}")))?;
        Ok(self.coordinates(&body))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_at_last_suffix() {
        assert_eq!(split_division("湖北省武汉市江岸区南京路16号"), ("湖北省武汉市江岸区", "南京路16号"));
        assert_eq!(split_division("南京路16号"), ("", "南京路16号"));
    }

    #[test]
    fn mock_is_deterministic_and_in_range() {
        let a = mock_coordinates("湖北省武汉市江岸区南京路16号").unwrap();
        assert_eq!(Some(a), mock_coordinates("湖北省武汉市江岸区南京路16号"));
        assert!((73.0..=135.0).contains(&a.lon) && (18.0..=54.0).contains(&a.lat));
        assert!(mock_coordinates("").is_none());
    }

    #[test]
    fn same_division_nearby_but_distinct() {
        let a = mock_coordinates("湖北省武汉市江岸区南京路16号").unwrap();
        let b = mock_coordinates("湖北省武汉市江岸区黄浦路3号").unwrap();
        assert_ne!(a, b);
        assert!((a.lon - b.lon).hypot(a.lat - b.lat) <= 0.1);
    }

    #[test]
    fn filter_counts_division_levels() {
        let f = AmbiguityFilter { min_levels: 3 };
        assert!(f.accepts("湖北省武汉市江岸区南京路16号"));
        assert!(!f.accepts("武汉市江岸区南京路16号"));
        assert!(!f.accepts("南京路16号"));
        let p = MockProvider::with_filter(3);
        assert_eq!(p.geocode("南京路16号", "k"), Ok(None));
    }

    #[test]
    fn http_url_and_pointer_parsing() {
        let p = HttpProvider::new("http://h/geo?address={address}&ak={key}", "/result/location/lng", "/result/location/lat");
        assert_eq!(p.url("南京路 16", "k&1"), "http://h/geo?address=%E5%8D%97%E4%BA%AC%E8%B7%AF+16&ak=k%261");
        let body = serde_json::json!({"result": {"location": {"lng": 114.3, "lat": "30.6"}}});
        assert_eq!(p.coordinates(&body), Some(Coordinates { lon: 114.3, lat: 30.6 }));
        assert_eq!(p.coordinates(&serde_json::json!({"status": 1})), None);
    }
}
