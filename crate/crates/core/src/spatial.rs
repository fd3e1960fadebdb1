//! Ripley's K for point patterns, and GeoJSON export of geocoded records.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::category::Category;
use crate::corpus::{Coordinates, EnterpriseRecord};
use crate::error::{Error, Result};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Above this many points the grid-bucket pair counter is used.
pub const GRID_THRESHOLD: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect { min_x, min_y, max_x, max_y }
    }

    pub fn unit() -> Self {
        Rect::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x) * (self.max_y - self.min_y)
    }

    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        (self.min_x..=self.max_x).contains(&x) && (self.min_y..=self.max_y).contains(&y)
    }

    pub fn bounding(points: &[(f64, f64)]) -> Option<Rect> {
        let (&first, rest) = points.split_first()?;
        Some(rest.iter().fold(Rect::new(first.0, first.1, first.0, first.1), |r, &(x, y)| {
            Rect::new(r.min_x.min(x), r.min_y.min(y), r.max_x.max(x), r.max_y.max(y))
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<(f64, f64)>,
    area: Rect,
}

impl PointSet {
    pub fn new(points: Vec<(f64, f64)>, area: Rect) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !area.contains(**p)) {
            return Err(Error::Config(format!("point ({}, {}) lies outside the study area", p.0, p.1)));
        }
        Ok(PointSet { points, area })
    }

    /// Projects lon/lat to kilometres with an equirectangular projection about
    /// the mean latitude. The study area is the bounding box of the points.
    pub fn from_coordinates(coords: &[Coordinates]) -> Self {
        let points = project(coords);
        let area = Rect::bounding(&points).unwrap_or(Rect::new(0.0, 0.0, 0.0, 0.0));
        PointSet { points, area }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn area(&self) -> Rect {
        self.area
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn project(coords: &[Coordinates]) -> Vec<(f64, f64)> {
    if coords.is_empty() {
        return Vec::new();
    }
    let mean_lat = coords.iter().map(|c| c.lat).sum::<f64>() / coords.len() as f64;
    let k = EARTH_RADIUS_KM.to_radians();
    let cos = mean_lat.to_radians().cos();
    coords.iter().map(|c| (c.lon * k * cos, c.lat * k)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KCurve {
    pub radii: Vec<f64>,
    pub k: Vec<f64>,
}

impl KCurve {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("r\tK\tpi_r2\n");
        for (r, k) in self.radii.iter().zip(&self.k) {
            let _ = writeln!(s, "{r}\t{k}\t{}", std::f64::consts::PI * r * r);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCounter {
    BruteForce,
    Grid,
    /// Grid above `GRID_THRESHOLD` points, brute force otherwise.
    Auto,
}

#[inline]
fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

/// Adds one to the bin of the smallest radius covering `d`.
#[inline]
fn bin(hist: &mut [u64], radii: &[f64], d: f64) {
    let i = radii.partition_point(|&r| r < d);
    if i < radii.len() {
        hist[i] += 1;
    }
}

fn brute_force(points: &[(f64, f64)], radii: &[f64]) -> Vec<u64> {
    let mut hist = vec![0u64; radii.len()];
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            bin(&mut hist, radii, dist(a, b));
        }
    }
    // each unordered pair stands for two ordered pairs
    hist.iter_mut().for_each(|h| *h *= 2);
    hist
}

fn grid(points: &[(f64, f64)], radii: &[f64]) -> Vec<u64> {
    let mut hist = vec![0u64; radii.len()];
    let Some(bounds) = Rect::bounding(points) else {
        return hist;
    };
    let r_max = radii[radii.len() - 1];
    let cells_along = |extent: f64| ((extent / r_max).floor() as usize + 1).min(2048);
    let nx = cells_along(bounds.max_x - bounds.min_x);
    let ny = cells_along(bounds.max_y - bounds.min_y);
    let cell_of = |(x, y): (f64, f64)| {
        let cx = (((x - bounds.min_x) / r_max) as usize).min(nx - 1);
        let cy = (((y - bounds.min_y) / r_max) as usize).min(ny - 1);
        (cx, cy)
    };
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    for (i, &p) in points.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        cells[cy * nx + cx].push(i);
    }
    for (i, &a) in points.iter().enumerate() {
        let (cx, cy) = cell_of(a);
        for gy in cy.saturating_sub(1)..=(cy + 1).min(ny - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(nx - 1) {
                for &j in &cells[gy * nx + gx] {
                    if j != i {
                        bin(&mut hist, radii, dist(a, points[j]));
                    }
                }
            }
        }
    }
    hist
}

/// K(r) = A / n² · #{ordered pairs i ≠ j : d_ij ≤ r}, without edge correction.
pub fn ripley_k(points: &PointSet, radii: &[f64]) -> Result<KCurve> {
    ripley_k_with(points, radii, PairCounter::Auto)
}

pub fn ripley_k_with(points: &PointSet, radii: &[f64], counter: PairCounter) -> Result<KCurve> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewPoints { required: 2, found: n });
    }
    if radii.is_empty() {
        return Err(Error::Config("at least one radius is required".into()));
    }
    if radii.iter().any(|r| !r.is_finite() || *r <= 0.0) || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("radii must be positive and strictly increasing".into()));
    }
    let use_grid = match counter {
        PairCounter::BruteForce => false,
        PairCounter::Grid => true,
        PairCounter::Auto => n > GRID_THRESHOLD,
    };
    let hist = if use_grid { grid(&points.points, radii) } else { brute_force(&points.points, radii) };
    let area = points.area.area();
    let nn = n as f64 * n as f64;
    let mut count = 0u64;
    let k = hist
        .iter()
        .map(|h| {
            count += h;
            area * count as f64 / nn
        })
        .collect();
    Ok(KCurve { radii: radii.to_vec(), k })
}

/// Parses a comma-separated radius list such as `10,50,100`.
pub fn parse_radii(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid radius `{}`", t.trim())))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExportFilter {
    pub category: Option<Category>,
    pub from_year: Option<i32>,
    pub to_year: Option<i32>,
}

impl ExportFilter {
    /// Records without a known year fail any year bound.
    pub fn accepts(&self, r: &EnterpriseRecord) -> bool {
        if self.category.is_some() && r.category != self.category {
            return false;
        }
        if self.from_year.is_none() && self.to_year.is_none() {
            return true;
        }
        match r.reg_year {
            Some(y) => self.from_year.is_none_or(|f| y >= f) && self.to_year.is_none_or(|t| y <= t),
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExportSummary {
    pub exported: usize,
    pub filtered_out: usize,
    pub without_coordinates: usize,
}

/// Records passing the filter that carry coordinates.
pub fn select<'a>(records: &'a [EnterpriseRecord], filter: &ExportFilter) -> (Vec<&'a EnterpriseRecord>, ExportSummary) {
    let mut summary = ExportSummary::default();
    let mut out = Vec::new();
    for r in records {
        if !filter.accepts(r) {
            summary.filtered_out += 1;
        } else if r.coordinates.is_none() {
            summary.without_coordinates += 1;
        } else {
            out.push(r);
        }
    }
    summary.exported = out.len();
    (out, summary)
}

pub fn export_geojson(records: &[EnterpriseRecord], filter: &ExportFilter) -> (Value, ExportSummary) {
    let (selected, summary) = select(records, filter);
    let features: Vec<Value> = selected
        .iter()
        .map(|r| {
            let c = r.coordinates.expect("selected records have coordinates");
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [c.lon, c.lat]},
                "properties": {
                    "id": r.id,
                    "category": r.category.map(|c| c.symbol()),
                    "year": r.reg_year,
                }
            })
        })
        .collect();
    (json!({"type": "FeatureCollection", "features": features}), summary)
}

pub fn write_geojson(path: &Path, records: &[EnterpriseRecord], filter: &ExportFilter) -> Result<ExportSummary> {
    let (doc, summary) = export_geojson(records, filter);
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Model(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(summary)
}
