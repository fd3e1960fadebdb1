//! Registration record model, TSV ingestion and missingness statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::geocode::GeocodeStatus;
use crate::locimpute::{ImputedLocation, LocationSource};

/// A validated six-digit postcode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Postcode(String);

impl Postcode {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Postcode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.len() == 6 && s.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Postcode(s.to_string()))
        } else {
            Err(format!("invalid postcode `{s}`"))
        }
    }
}

impl fmt::Display for Postcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Origin {
    #[default]
    Original,
    Imputed,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Original => "original",
            Origin::Imputed => "imputed",
        }
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Origin::Original),
            "imputed" => Ok(Origin::Imputed),
            other => Err(format!("invalid provenance flag `{other}`")),
        }
    }
}

/// Per-field provenance. A flag is only meaningful while its field is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub category: Origin,
    pub postcode: Origin,
    pub location: Origin,
    pub coordinates: Origin,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnterpriseRecord {
    pub id: String,
    pub name: Option<String>,
    pub category: Option<Category>,
    pub address: Option<String>,
    pub postcode: Option<Postcode>,
    /// How an imputed postcode was chosen.
    pub postcode_source: Option<LocationSource>,
    pub data_source: Option<String>,
    pub reg_year: Option<i32>,
    pub location: Option<ImputedLocation>,
    pub coordinates: Option<Coordinates>,
    pub geocode_status: Option<GeocodeStatus>,
    /// Set when a postcode was chosen without any supporting evidence.
    pub low_confidence: bool,
    pub provenance: Provenance,
}

impl EnterpriseRecord {
    pub fn new(id: impl Into<String>) -> Self {
        EnterpriseRecord {
            id: id.into(),
            ..Default::default()
        }
    }

    /// The text fields that may carry address nouns, in lookup order.
    pub fn location_fields(&self) -> impl Iterator<Item = &str> {
        [&self.data_source, &self.address, &self.name]
            .into_iter()
            .filter_map(|f| f.as_deref())
    }
}

/// First four-digit run in `data_source` that reads as a year in [1900, 2100].
pub fn extract_year(data_source: &str) -> Option<i32> {
    let chars: Vec<char> = data_source.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i - start >= 4 {
                // every 4-digit window of a longer digit run counts as a substring
                for w in start..=i - 4 {
                    let year: i32 = chars[w..w + 4].iter().collect::<String>().parse().unwrap();
                    if (1900..=2100).contains(&year) {
                        return Some(year);
                    }
                }
            }
        } else {
            i += 1;
        }
    }
    None
}

pub const REQUIRED_COLUMNS: [&str; 6] = ["id", "name", "category", "address", "postcode", "data_source"];

const EXTRA_COLUMNS: [&str; 16] = [
    "reg_year",
    "postcode_source",
    "province",
    "city",
    "county",
    "street",
    "full_address",
    "loc_source",
    "lon",
    "lat",
    "geo_status",
    "prov_category",
    "prov_postcode",
    "prov_location",
    "prov_coordinates",
    "low_confidence",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub records: Vec<EnterpriseRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn ingest(path: &Path) -> Result<Ingested> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_records(&text).map_err(|column| Error::MissingColumn {
        path: path.to_path_buf(),
        column,
    })
}

fn opt(cell: Option<&&str>) -> Option<String> {
    cell.map(|s| s.trim()).filter(|s| !s.is_empty()).map(str::to_string)
}

/// Parses TSV text. Returns the name of the first missing required column on a bad header.
pub fn parse_records(text: &str) -> std::result::Result<Ingested, String> {
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.trim_start_matches('\u{feff}').split('\t').map(str::trim).collect(),
        None => return Err(REQUIRED_COLUMNS[0].to_string()),
    };
    let col = |name: &str| header.iter().position(|h| *h == name);
    let mut required = [0usize; 6];
    for (slot, name) in required.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = col(name).ok_or_else(|| name.to_string())?;
    }
    let extra: BTreeMap<&str, usize> = EXTRA_COLUMNS
        .iter()
        .filter_map(|&c| col(c).map(|i| (c, i)))
        .collect();

    let mut out = Ingested::default();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != header.len() {
            out.diagnostics.push(Diagnostic {
                line: line_no,
                message: format!("expected {} cells, found {}", header.len(), cells.len()),
            });
            continue;
        }
        match parse_row(&cells, &required, &extra) {
            Ok(r) => out.records.push(r),
            Err(message) => out.diagnostics.push(Diagnostic { line: line_no, message }),
        }
    }
    Ok(out)
}

fn parse_row(
    cells: &[&str],
    required: &[usize; 6],
    extra: &BTreeMap<&str, usize>,
) -> std::result::Result<EnterpriseRecord, String> {
    let get = |i: usize| opt(cells.get(i));
    let get_extra = |name: &str| extra.get(name).and_then(|&i| opt(cells.get(i)));

    let id = get(required[0]).ok_or("empty id")?;
    let mut r = EnterpriseRecord::new(id);
    r.name = get(required[1]);
    r.category = get(required[2])
        .map(|c| c.parse::<Category>())
        .transpose()
        .map_err(|e| e.to_string())?;
    r.address = get(required[3]);
    r.postcode = get(required[4]).map(|p| p.parse()).transpose()?;
    r.data_source = get(required[5]);
    r.reg_year = r.data_source.as_deref().and_then(extract_year);
    r.postcode_source = get_extra("postcode_source").map(|s| s.parse()).transpose()?;

    if let Some(province) = get_extra("province") {
        let source = match get_extra("loc_source") {
            Some(s) => s.parse::<LocationSource>()?,
            None => LocationSource::Original,
        };
        r.location = Some(ImputedLocation {
            province,
            city: get_extra("city").unwrap_or_default(),
            county: get_extra("county").unwrap_or_default(),
            street: get_extra("street").unwrap_or_default(),
            full_address: get_extra("full_address").unwrap_or_default(),
            source,
        });
    }
    match (get_extra("lon"), get_extra("lat")) {
        (Some(lon), Some(lat)) => {
            let lon: f64 = lon.parse().map_err(|_| format!("invalid longitude `{lon}`"))?;
            let lat: f64 = lat.parse().map_err(|_| format!("invalid latitude `{lat}`"))?;
            if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
                return Err(format!("coordinates out of range ({lon}, {lat})"));
            }
            r.coordinates = Some(Coordinates { lon, lat });
        }
        (None, None) => {}
        _ => return Err("longitude and latitude must both be present".into()),
    }
    r.geocode_status = get_extra("geo_status").map(|s| s.parse()).transpose()?;
    let flag = |name: &str| -> std::result::Result<Origin, String> {
        get_extra(name).map(|s| s.parse()).transpose().map(Option::unwrap_or_default)
    };
    r.provenance = Provenance {
        category: flag("prov_category")?,
        postcode: flag("prov_postcode")?,
        location: flag("prov_location")?,
        coordinates: flag("prov_coordinates")?,
    };
    r.low_confidence = matches!(get_extra("low_confidence").as_deref(), Some("1" | "true"));
    Ok(r)
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Writes records with every column, so that `ingest` reproduces them.
pub fn write_records<W: Write>(out: W, records: &[EnterpriseRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    let header: Vec<&str> = REQUIRED_COLUMNS.iter().chain(EXTRA_COLUMNS.iter()).copied().collect();
    writeln!(w, "{}", header.join("\t"))?;
    for r in records {
        let s = |v: &Option<String>| v.as_deref().map(clean).unwrap_or_default();
        let loc = r.location.as_ref();
        let present = |p: bool, o: Origin| if p { o.as_str() } else { "" };
        let cells: [String; 22] = [
            clean(&r.id),
            s(&r.name),
            r.category.map(|c| c.symbol().to_string()).unwrap_or_default(),
            s(&r.address),
            r.postcode.as_ref().map(|p| p.to_string()).unwrap_or_default(),
            s(&r.data_source),
            r.reg_year.map(|y| y.to_string()).unwrap_or_default(),
            r.postcode_source.map(|s| s.as_str().to_string()).unwrap_or_default(),
            loc.map(|l| clean(&l.province)).unwrap_or_default(),
            loc.map(|l| clean(&l.city)).unwrap_or_default(),
            loc.map(|l| clean(&l.county)).unwrap_or_default(),
            loc.map(|l| clean(&l.street)).unwrap_or_default(),
            loc.map(|l| clean(&l.full_address)).unwrap_or_default(),
            loc.map(|l| l.source.as_str().to_string()).unwrap_or_default(),
            r.coordinates.map(|c| c.lon.to_string()).unwrap_or_default(),
            r.coordinates.map(|c| c.lat.to_string()).unwrap_or_default(),
            r.geocode_status.map(|g| g.as_str().to_string()).unwrap_or_default(),
            present(r.category.is_some(), r.provenance.category).into(),
            present(r.postcode.is_some(), r.provenance.postcode).into(),
            present(r.location.is_some(), r.provenance.location).into(),
            present(r.coordinates.is_some(), r.provenance.coordinates).into(),
            if r.low_confidence { "1".into() } else { String::new() },
        ];
        writeln!(w, "{}", cells.join("\t"))?;
    }
    w.flush()
}

pub fn save_records(path: &Path, records: &[EnterpriseRecord]) -> Result<()> {
    let f = fs::File::create(path).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })?;
    write_records(f, records).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MissingnessReport {
    pub total: usize,
    pub name: f64,
    pub category: f64,
    pub address: f64,
    pub postcode: f64,
    pub data_source: f64,
}

pub fn missingness(records: &[EnterpriseRecord]) -> MissingnessReport {
    let total = records.len();
    if total == 0 {
        return MissingnessReport::default();
    }
    let frac = |f: &dyn Fn(&EnterpriseRecord) -> bool| {
        records.iter().filter(|r| f(r)).count() as f64 / total as f64
    };
    MissingnessReport {
        total,
        name: frac(&|r| r.name.is_none()),
        category: frac(&|r| r.category.is_none()),
        address: frac(&|r| r.address.is_none()),
        postcode: frac(&|r| r.postcode.is_none()),
        data_source: frac(&|r| r.data_source.is_none()),
    }
}

impl fmt::Display for MissingnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "field\tmissing_fraction")?;
        writeln!(f, "name\t{:.4}", self.name)?;
        writeln!(f, "category\t{:.4}", self.category)?;
        writeln!(f, "address\t{:.4}", self.address)?;
        writeln!(f, "postcode\t{:.4}", self.postcode)?;
        writeln!(f, "data_source\t{:.4}", self.data_source)?;
        write!(f, "total\t{}", self.total)
    }
}

/// Unmasked values of one synthetic record, including its administrative path.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TruthRow {
    pub name: String,
    pub category: Option<Category>,
    pub address: String,
    pub postcode: String,
    pub data_source: String,
    pub province: String,
    pub city: String,
    pub county: String,
    pub street: String,
}

const TRUTH_FIELDS: [&str; 9] = [
    "name",
    "category",
    "address",
    "postcode",
    "data_source",
    "province",
    "city",
    "county",
    "street",
];

/// Ground truth keyed by record id. Stored as an `id<TAB>field<TAB>value` sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    pub rows: BTreeMap<String, TruthRow>,
}

impl GroundTruth {
    pub fn get(&self, id: &str) -> Option<&TruthRow> {
        self.rows.get(id)
    }

    pub fn write<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "id\tfield\tvalue")?;
        for (id, t) in &self.rows {
            let values = [
                t.name.clone(),
                t.category.map(|c| c.symbol().to_string()).unwrap_or_default(),
                t.address.clone(),
                t.postcode.clone(),
                t.data_source.clone(),
                t.province.clone(),
                t.city.clone(),
                t.county.clone(),
                t.street.clone(),
            ];
            for (field, value) in TRUTH_FIELDS.iter().zip(values) {
                writeln!(w, "{}\t{}\t{}", clean(id), field, clean(&value))?;
            }
        }
        w.flush()
    }

    pub fn load(path: &Path) -> Result<GroundTruth> {
        let text = fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut gt = GroundTruth::default();
        for line in text.lines().skip(1) {
            let mut it = line.splitn(3, '\t');
            let (Some(id), Some(field), Some(value)) = (it.next(), it.next(), it.next()) else {
                continue;
            };
            let row = gt.rows.entry(id.to_string()).or_default();
            let value = value.to_string();
            match field {
                "name" => row.name = value,
                "category" => row.category = value.parse().ok(),
                "address" => row.address = value,
                "postcode" => row.postcode = value,
                "data_source" => row.data_source = value,
                "province" => row.province = value,
                "city" => row.city = value,
                "county" => row.county = value,
                "street" => row.street = value,
                _ => {}
            }
        }
        Ok(gt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id\tname\tcategory\taddress\tpostcode\tdata_source";

    #[test]
    fn category_cell_in_chinese() {
        let text = format!(
            "{HEADER}\nE1\t武汉***物业管理有限公司\t房地产业\t南京路16号\t430014\t2004年注册_湖北\n"
        );
        let got = parse_records(&text).unwrap();
        assert!(got.diagnostics.is_empty());
        let r = &got.records[0];
        assert_eq!(r.category, Some(Category::RE));
        assert_eq!(r.postcode.as_ref().unwrap().as_str(), "430014");
        assert_eq!(r.reg_year, Some(2004));
    }

    #[test]
    fn empty_optionals_are_absent() {
        let got = parse_records(&format!("{HEADER}\nE1\t\t\t\t\t\n")).unwrap();
        assert!(got.diagnostics.is_empty());
        let r = &got.records[0];
        assert_eq!(r.id, "E1");
        assert!(r.name.is_none() && r.category.is_none() && r.address.is_none());
        assert!(r.postcode.is_none() && r.data_source.is_none() && r.reg_year.is_none());
    }

    #[test]
    fn malformed_row_is_skipped_with_diagnostic() {
        let text = format!(
            "{HEADER}\nE1\ta\tRE\tx\t430014\t\nE2\tb\tM\ty\t\t\nE3\tc\tXX\tz\t\t\nE4\td\t\t\t\t\n"
        );
        let got = parse_records(&text).unwrap();
        assert_eq!(got.records.len(), 3);
        assert_eq!(got.diagnostics.len(), 1);
        assert_eq!(got.diagnostics[0].line, 4);
    }

    #[test]
    fn bad_postcode_and_short_row_rejected() {
        let text = format!("{HEADER}\nE1\ta\t\t\t43001\t\nE2\tb\n");
        let got = parse_records(&text).unwrap();
        assert!(got.records.is_empty());
        assert_eq!(got.diagnostics.len(), 2);
    }

    #[test]
    fn missing_header_column() {
        assert_eq!(parse_records("id\tname\n").unwrap_err(), "category");
    }

    #[test]
    fn unreadable_file_is_fatal() {
        assert!(matches!(
            ingest(Path::new("/nonexistent/records.tsv")),
            Err(Error::Read { .. })
        ));
    }

    #[test]
    fn year_extraction() {
        assert_eq!(extract_year("2004年注册_湖北"), Some(2004));
        assert_eq!(extract_year("Registered in Hubei, 2004"), Some(2004));
        assert_eq!(extract_year("no year"), None);
        assert_eq!(extract_year("code 0042 then 1999"), Some(1999));
        assert_eq!(extract_year("12345"), None);
        assert_eq!(extract_year("31999"), Some(1999));
    }

    fn rec(id: &str, postcode: Option<&str>) -> EnterpriseRecord {
        let mut r = EnterpriseRecord::new(id);
        r.name = Some("n".into());
        r.category = Some(Category::M);
        r.address = Some("a".into());
        r.data_source = Some("d".into());
        r.postcode = postcode.map(|p| p.parse().unwrap());
        r
    }

    #[test]
    fn missingness_hand_counted() {
        let records: Vec<_> = (0..10)
            .map(|i| rec(&format!("E{i}"), if i < 3 { None } else { Some("100000") }))
            .collect();
        let m = missingness(&records);
        assert_eq!(m.total, 10);
        assert!((m.postcode - 0.3).abs() < 1e-12);
        assert_eq!(m.category, 0.0);
        assert_eq!(m.name, 0.0);
    }

    #[test]
    fn missingness_empty() {
        assert_eq!(missingness(&[]), MissingnessReport::default());
    }

    #[test]
    fn round_trip_with_location_and_coordinates() {
        let mut r = rec("E1", Some("430014"));
        r.location = Some(ImputedLocation {
            province: "湖北省".into(),
            city: "武汉市".into(),
            county: "江岸区".into(),
            street: "南京路".into(),
            full_address: "湖北省武汉市江岸区南京路16号".into(),
            source: LocationSource::PostcodeLookup,
        });
        r.coordinates = Some(Coordinates { lon: 114.305_215_1, lat: 30.592_8 });
        r.geocode_status = Some(GeocodeStatus::Ok);
        r.postcode_source = Some(LocationSource::Tiebreak);
        r.provenance.location = Origin::Imputed;
        r.provenance.coordinates = Origin::Imputed;
        r.low_confidence = true;
        let mut buf = Vec::new();
        write_records(&mut buf, &[r.clone()]).unwrap();
        let got = parse_records(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(got.records, vec![r]);
    }
}
