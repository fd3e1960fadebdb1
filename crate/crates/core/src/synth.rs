//! Seeded synthetic corpora: a lexicon, a gazetteer and enterprise records with
//! ground truth, masked at configurable per-field rates.

use std::collections::HashSet;
use std::fs::{self, File};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::category::{Category, NUM_CATEGORIES};
use crate::corpus::{extract_year, save_records, EnterpriseRecord, GroundTruth, Postcode, TruthRow};
use crate::error::{Error, Result};
use crate::gazetteer::{write_entries, PostcodeEntry};
use crate::segmenter::{Lexicon, Pos};
use crate::vectorizer::{LabeledPoint, SparseVector};

/// Per-field missing rates observed in real registration data.
pub const REGISTRY_MISSING_RATES: MissingRates = MissingRates {
    name: 0.0003,
    category: 0.4364,
    address: 0.0019,
    postcode: 0.2575,
    data_source: 0.3106,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingRates {
    pub name: f64,
    pub category: f64,
    pub address: f64,
    pub postcode: f64,
    pub data_source: f64,
}

impl MissingRates {
    pub const NONE: MissingRates = MissingRates {
        name: 0.0,
        category: 0.0,
        address: 0.0,
        postcode: 0.0,
        data_source: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub records: usize,
    pub missing: MissingRates,
    /// Fraction of addresses reduced to street and house number.
    pub ambiguity_rate: f64,
    /// Fraction of the remaining addresses written without their province.
    pub province_omit_rate: f64,
    pub lexicon_seed: u64,
    pub seed: u64,
    pub provinces: usize,
    pub cities_per_province: usize,
    pub counties_per_city: usize,
    pub streets_per_county: usize,
    /// Street names are drawn from this shared pool, so the same street name
    /// appears in many cities.
    pub street_pool: usize,
    pub words_per_category: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            records: 10_000,
            missing: REGISTRY_MISSING_RATES,
            ambiguity_rate: 0.30,
            province_omit_rate: 0.35,
            lexicon_seed: 1,
            seed: 7,
            provinces: 8,
            cities_per_province: 4,
            counties_per_city: 3,
            streets_per_county: 6,
            street_pool: 60,
            words_per_category: 10,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.missing;
        let rates = [
            ("missing.name", m.name),
            ("missing.category", m.category),
            ("missing.address", m.address),
            ("missing.postcode", m.postcode),
            ("missing.data_source", m.data_source),
            ("ambiguity_rate", self.ambiguity_rate),
            ("province_omit_rate", self.province_omit_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} = {r} is outside [0, 1]")));
            }
        }
        let sizes = [
            ("provinces", self.provinces, 89),
            ("cities_per_province", self.cities_per_province, 50),
            ("counties_per_city", self.counties_per_city, 50),
            ("streets_per_county", self.streets_per_county, 50),
            ("words_per_category", self.words_per_category, 200),
        ];
        for (name, v, max) in sizes {
            if v == 0 || v > max {
                return Err(Error::Config(format!("{name} = {v} must be in 1..={max}")));
            }
        }
        if self.street_pool < self.counties_per_city * self.streets_per_county {
            return Err(Error::Config(format!(
                "street_pool = {} is smaller than the {} streets of one city",
                self.street_pool,
                self.counties_per_city * self.streets_per_county
            )));
        }
        Ok(())
    }
}

const STEM_CHARS: &str = "安北宝滨昌成城川春大德东方丰福富光广贵海汉和河黑红怀淮黄惠吉佳江金锦京晶景九康兰乐立利丽林临龙隆鲁罗绿茂美明南宁平齐启千青庆泉仁荣瑞山善上尚深胜盛石顺松泰天通同万旺威文武西祥新信兴星旭阳永友宇玉元远云泽正中洲珠紫卓恒鼎聚汇嘉凯联鹏晨辰博创达峰钢豪宏鸿华长";
const FEATURE_TERMINALS: &str = "业务品材械装料具艺商店厂馆院站所坊行社屋";
const STREET_TERMINALS: &str = "路街道";
const COMPANY_SUFFIXES: [&str; 4] = ["有限公司", "有限责任公司", "股份有限公司", "集团有限公司"];
/// Characters that appear in templates or suffixes and so never in a stem.
const RESERVED: &str = "省市区县州盟旗号年注册有限公司责任股份集团";

/// The seeded lexicon and gazetteer that records are drawn from.
#[derive(Debug, Clone)]
pub struct World {
    pub lexicon: Lexicon,
    pub entries: Vec<PostcodeEntry>,
    /// Feature words indicating each category, indexed by `Category::index`.
    pub category_words: Vec<Vec<String>>,
}

struct Stems {
    chars: Vec<char>,
    used: HashSet<String>,
}

impl Stems {
    fn new() -> Self {
        let reserved: HashSet<char> = RESERVED
            .chars()
            .chain(FEATURE_TERMINALS.chars())
            .chain(STREET_TERMINALS.chars())
            .collect();
        let mut chars: Vec<char> = STEM_CHARS.chars().filter(|c| !reserved.contains(c)).collect();
        chars.sort_unstable();
        chars.dedup();
        Stems {
            chars,
            used: HashSet::new(),
        }
    }

    /// A word not produced before: `len` stem characters plus `terminal`.
    fn word(&mut self, rng: &mut ChaCha8Rng, len: usize, terminal: char) -> String {
        loop {
            let mut w: String = (0..len).map(|_| *self.chars.choose(rng).unwrap()).collect();
            w.push(terminal);
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

impl World {
    pub fn generate(config: &SynthConfig) -> Result<World> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.lexicon_seed);
        let mut stems = Stems::new();
        let mut lexicon = Lexicon::new();

        let street_terms: Vec<char> = STREET_TERMINALS.chars().collect();
        let street_pool: Vec<String> = (0..config.street_pool)
            .map(|_| {
                let t = *street_terms.choose(&mut rng).unwrap();
                stems.word(&mut rng, 2, t)
            })
            .collect();

        let mut entries = Vec::new();
        for p in 0..config.provinces {
            let province = stems.word(&mut rng, 2, '省');
            let mut seq = 0u32;
            for _ in 0..config.cities_per_province {
                let city = stems.word(&mut rng, 2, '市');
                let mut streets = street_pool.clone();
                streets.shuffle(&mut rng);
                let mut streets = streets.into_iter();
                for _ in 0..config.counties_per_city {
                    let suffix = if rng.gen_bool(0.7) { '区' } else { '县' };
                    let county = stems.word(&mut rng, 2, suffix);
                    let codes: Vec<Postcode> = (0..rng.gen_range(2..=3))
                        .map(|_| {
                            seq += 1;
                            format!("{:02}{:04}", 10 + p, seq).parse().expect("six digits")
                        })
                        .collect();
                    for s in 0..config.streets_per_county {
                        let street = streets.next().expect("street pool validated");
                        let postcode = if s < codes.len() {
                            codes[s].clone()
                        } else {
                            codes.choose(&mut rng).unwrap().clone()
                        };
                        entries.push(PostcodeEntry {
                            province: province.clone(),
                            city: city.clone(),
                            county: county.clone(),
                            street,
                            postcode,
                        });
                    }
                }
            }
        }
        for e in &entries {
            for name in [&e.province, &e.city, &e.county, &e.street] {
                lexicon.insert(name, Pos::Ns);
            }
        }

        let terminals: Vec<char> = FEATURE_TERMINALS.chars().collect();
        let tags = [Pos::N, Pos::V, Pos::Vn];
        let category_words: Vec<Vec<String>> = (0..NUM_CATEGORIES)
            .map(|_| {
                (0..config.words_per_category)
                    .map(|_| {
                        let len = rng.gen_range(1..=2);
                        let t = *terminals.choose(&mut rng).unwrap();
                        let w = stems.word(&mut rng, len, t);
                        lexicon.insert(&w, *tags.choose(&mut rng).unwrap());
                        w
                    })
                    .collect()
            })
            .collect();
        for s in COMPANY_SUFFIXES {
            lexicon.insert(s, Pos::X);
        }
        Ok(World {
            lexicon,
            entries,
            category_words,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub world: World,
    pub records: Vec<EnterpriseRecord>,
    pub truth: GroundTruth,
}

pub fn synth(config: &SynthConfig) -> Result<Synthetic> {
    let world = World::generate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::with_capacity(config.records);
    let mut truth = GroundTruth::default();
    let m = &config.missing;
    for i in 0..config.records {
        let id = format!("E{i:07}");
        let category = Category::from_index(rng.gen_range(0..NUM_CATEGORIES)).expect("index in range");
        let e = world.entries.choose(&mut rng).expect("non-empty gazetteer");

        let admin = match rng.gen_range(0..100) {
            0..=49 => e.county.as_str(),
            50..=84 => e.city.as_str(),
            _ => "",
        };
        let words = &world.category_words[category.index()];
        let picked: String = (0..rng.gen_range(1..=3)).map(|_| words.choose(&mut rng).unwrap().as_str()).collect();
        let suffix = COMPANY_SUFFIXES.choose(&mut rng).unwrap();
        let name = format!("{admin}***{picked}{suffix}");

        let house = format!("{}号", rng.gen_range(1..=999));
        let full = format!("{}{}{}{}{house}", e.province, e.city, e.county, e.street);
        let address = if rng.gen_bool(config.ambiguity_rate) {
            format!("{}{house}", e.street)
        } else if rng.gen_bool(config.province_omit_rate) {
            format!("{}{}{}{house}", e.city, e.county, e.street)
        } else {
            full.clone()
        };
        let year = rng.gen_range(1960..=2015);
        let data_source = format!("{year}年注册_{}", e.province);

        truth.rows.insert(
            id.clone(),
            TruthRow {
                name: name.clone(),
                category: Some(category),
                address: full,
                postcode: e.postcode.to_string(),
                data_source: data_source.clone(),
                province: e.province.clone(),
                city: e.city.clone(),
                county: e.county.clone(),
                street: e.street.clone(),
            },
        );

        let mut r = EnterpriseRecord::new(id);
        r.name = (!rng.gen_bool(m.name)).then_some(name);
        r.category = (!rng.gen_bool(m.category)).then_some(category);
        r.address = (!rng.gen_bool(m.address)).then_some(address);
        r.postcode = (!rng.gen_bool(m.postcode)).then(|| e.postcode.clone());
        r.data_source = (!rng.gen_bool(m.data_source)).then_some(data_source);
        r.reg_year = r.data_source.as_deref().and_then(extract_year);
        records.push(r);
    }
    Ok(Synthetic { world, records, truth })
}

pub const RECORDS_FILE: &str = "records.tsv";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const GAZETTEER_FILE: &str = "gazetteer.tsv";

/// Writes records, ground truth, lexicon and gazetteer into `dir`.
pub fn write_synthetic(dir: &Path, s: &Synthetic) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    save_records(&dir.join(RECORDS_FILE), &s.records)?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path).map_err(|source| Error::Write { path, source })
    };
    let wrap = |name: &str| {
        let path = dir.join(name);
        move |source| Error::Write { path, source }
    };
    s.truth.write(create(TRUTH_FILE)?).map_err(wrap(TRUTH_FILE))?;
    s.world.lexicon.write(create(LEXICON_FILE)?).map_err(wrap(LEXICON_FILE))?;
    let mut entries = s.world.entries.clone();
    entries.sort();
    write_entries(create(GAZETTEER_FILE)?, &entries).map_err(wrap(GAZETTEER_FILE))?;
    Ok(())
}

/// Labeled sparse vectors drawn directly in index space, for timing runs.
/// Each class owns `words` random indices and every vector holds 1–3 of them.
pub fn labeled_points(n: usize, dim: usize, words: usize, seed: u64) -> Vec<LabeledPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<Vec<u32>> = (0..NUM_CATEGORIES)
        .map(|_| (0..words).map(|_| rng.gen_range(0..dim as u32)).collect())
        .collect();
    (0..n)
        .map(|_| {
            let c = rng.gen_range(0..NUM_CATEGORIES);
            let pairs: Vec<(u32, u32)> = (0..rng.gen_range(1..=3))
                .map(|_| (*vocab[c].choose(&mut rng).unwrap(), 1))
                .collect();
            LabeledPoint {
                label: Category::from_index(c).unwrap(),
                vector: SparseVector::from_pairs(dim, pairs),
            }
        })
        .collect()
}
