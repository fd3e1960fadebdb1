//! Postcode imputation from address nouns, administrative-division lookup by
//! postcode, and assembly of unambiguous addresses.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{EnterpriseRecord, Origin, Postcode};
use crate::gazetteer::{fuzzy_eq, AddressTree, PostcodeEntry};
use crate::partition::par_map;
use crate::segmenter::{address_nouns, address_nouns_of, segment, Lexicon, Pos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocationSource {
    /// The address already named its full division.
    Original,
    /// Division found from a postcode present at ingestion.
    PostcodeLookup,
    /// Postcode chosen as the unique best gazetteer match.
    VsmMatch,
    /// Postcode chosen by appearance probability among tied matches.
    Tiebreak,
}

impl LocationSource {
    pub const ALL: [LocationSource; 4] = [
        LocationSource::Original,
        LocationSource::PostcodeLookup,
        LocationSource::VsmMatch,
        LocationSource::Tiebreak,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LocationSource::Original => "original",
            LocationSource::PostcodeLookup => "postcode-lookup",
            LocationSource::VsmMatch => "vsm-match",
            LocationSource::Tiebreak => "tiebreak",
        }
    }
}

impl fmt::Display for LocationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LocationSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LocationSource::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown location source `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputedLocation {
    pub province: String,
    pub city: String,
    pub county: String,
    pub street: String,
    pub full_address: String,
    pub source: LocationSource,
}

/// Address nouns of every record that arrived with a postcode, for counting
/// how often each postcode co-occurs with a set of nouns.
#[derive(Debug, Default)]
pub struct CorpusIndex {
    postcodes: Vec<Postcode>,
    by_noun: HashMap<String, Vec<u32>>,
}

impl CorpusIndex {
    pub fn build(records: &[EnterpriseRecord], lexicon: &Lexicon) -> Self {
        let mut idx = CorpusIndex::default();
        for r in records {
            let Some(p) = r.postcode.as_ref() else { continue };
            if r.provenance.postcode != Origin::Original {
                continue;
            }
            let id = idx.postcodes.len() as u32;
            idx.postcodes.push(p.clone());
            for n in address_nouns_of(r.location_fields(), lexicon) {
                idx.by_noun.entry(n).or_default().push(id);
            }
        }
        idx
    }

    /// Records carrying `postcode` whose noun set contains every query noun.
    pub fn support(&self, nouns: &[String], postcode: &Postcode) -> u64 {
        let mut lists: Vec<&Vec<u32>> = Vec::with_capacity(nouns.len());
        for n in nouns {
            match self.by_noun.get(n) {
                Some(l) => lists.push(l),
                None => return 0,
            }
        }
        let Some((shortest, rest)) = lists.split_first() else {
            return 0;
        };
        // posting lists are sorted because ids are assigned in order
        shortest
            .iter()
            .filter(|&&id| &self.postcodes[id as usize] == postcode)
            .filter(|id| rest.iter().all(|l| l.binary_search(id).is_ok()))
            .count() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TieBreak {
    /// Distinct tied postcodes, ascending.
    pub candidates: Vec<Postcode>,
    pub counts: Vec<u64>,
    /// `counts[i] / sum(counts)`, all zero when nothing supports any candidate.
    pub probabilities: Vec<f64>,
    pub chosen: Postcode,
    pub low_confidence: bool,
}

/// Picks the candidate with the highest appearance probability. Ties, and the
/// no-support case, go to the smallest postcode.
pub fn tie_break(candidates: &[(Postcode, u64)]) -> Option<TieBreak> {
    let mut merged: BTreeMap<&Postcode, u64> = BTreeMap::new();
    for (p, n) in candidates {
        let slot = merged.entry(p).or_default();
        *slot = (*slot).max(*n);
    }
    let total: u64 = merged.values().sum();
    let (chosen, _) = merged
        .iter()
        .fold(None, |best: Option<(&Postcode, u64)>, (&p, &n)| match best {
            Some((_, bn)) if bn >= n => best,
            _ => Some((p, n)),
        })?;
    Some(TieBreak {
        chosen: chosen.clone(),
        low_confidence: total == 0,
        probabilities: merged
            .values()
            .map(|&n| if total == 0 { 0.0 } else { n as f64 / total as f64 })
            .collect(),
        counts: merged.values().copied().collect(),
        candidates: merged.into_keys().cloned().collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum PostcodeOutcome {
    Found {
        postcode: Postcode,
        source: LocationSource,
        low_confidence: bool,
    },
    /// No address nouns, or nothing in the gazetteer matched them.
    NoMatch,
}

pub fn impute_postcode(
    record: &EnterpriseRecord,
    tree: &AddressTree,
    corpus: &CorpusIndex,
    lexicon: &Lexicon,
) -> PostcodeOutcome {
    let nouns = address_nouns_of(record.location_fields(), lexicon);
    postcode_for_nouns(&nouns, tree, corpus)
}

pub fn postcode_for_nouns(nouns: &[String], tree: &AddressTree, corpus: &CorpusIndex) -> PostcodeOutcome {
    let matches = tree.match_nouns(nouns);
    let Some(top) = matches.first().map(|m| m.degree) else {
        return PostcodeOutcome::NoMatch;
    };
    if top == 0.0 {
        return PostcodeOutcome::NoMatch;
    }
    let mut tied: Vec<&Postcode> = matches
        .iter()
        .take_while(|m| m.degree == top)
        .map(|m| &m.entry.postcode)
        .collect();
    tied.dedup();
    if tied.len() == 1 {
        return PostcodeOutcome::Found {
            postcode: tied[0].clone(),
            source: LocationSource::VsmMatch,
            low_confidence: false,
        };
    }
    let counted: Vec<(Postcode, u64)> = tied
        .into_iter()
        .map(|p| (p.clone(), corpus.support(nouns, p)))
        .collect();
    let tb = tie_break(&counted).expect("at least two tied candidates");
    PostcodeOutcome::Found {
        postcode: tb.chosen,
        source: LocationSource::Tiebreak,
        low_confidence: tb.low_confidence,
    }
}

/// Address with leading division names of `entry` removed.
fn street_level(address: &str, entry: &PostcodeEntry, lexicon: &Lexicon) -> String {
    let division = [&entry.province, &entry.city, &entry.county];
    let tokens = segment(address, lexicon);
    let skip = tokens
        .iter()
        .take_while(|t| t.pos == Pos::Ns && division.iter().any(|d| fuzzy_eq(&t.surface, d)))
        .count();
    tokens[skip..].iter().map(|t| t.surface.as_str()).collect()
}

/// Division of the record's postcode combined with its street-level address.
/// `None` when the postcode is absent or unknown to the gazetteer.
pub fn impute_ad(record: &EnterpriseRecord, tree: &AddressTree, lexicon: &Lexicon) -> Option<ImputedLocation> {
    let postcode = record.postcode.as_ref()?;
    let entries = tree.entries_for_postcode(postcode);
    if entries.is_empty() {
        return None;
    }
    let nouns = address_nouns_of(record.location_fields(), lexicon);
    // entries come sorted by path, so the first maximum is the lexicographic choice
    let mut best = entries[0];
    let mut best_degree = AddressTree::degree(best, &nouns).0;
    for &e in &entries[1..] {
        let d = AddressTree::degree(e, &nouns).0;
        if d > best_degree {
            best = e;
            best_degree = d;
        }
    }

    let address = record.address.as_deref().unwrap_or("");
    let own = address_nouns(&segment(address, lexicon));
    let names_division = [&best.province, &best.city, &best.county]
        .iter()
        .filter(|d| !d.is_empty())
        .all(|d| own.iter().any(|n| fuzzy_eq(n, d)));
    let (full_address, source) = if names_division && !address.is_empty() {
        (address.to_string(), LocationSource::Original)
    } else {
        (
            format!("{}{}", best.division(), street_level(address, best, lexicon)),
            LocationSource::PostcodeLookup,
        )
    };
    Some(ImputedLocation {
        province: best.province.clone(),
        city: best.city.clone(),
        county: best.county.clone(),
        street: best.street.clone(),
        full_address,
        source,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocationReport {
    pub records: usize,
    pub postcode_present: usize,
    pub postcode_filled: usize,
    pub postcode_no_match: usize,
    pub low_confidence: usize,
    pub location_present: usize,
    pub location_filled: usize,
    pub location_no_match: usize,
    pub sources: BTreeMap<LocationSource, usize>,
}

impl fmt::Display for LocationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric\tcount")?;
        writeln!(f, "records\t{}", self.records)?;
        writeln!(f, "postcode_present\t{}", self.postcode_present)?;
        writeln!(f, "postcode_filled\t{}", self.postcode_filled)?;
        writeln!(f, "postcode_no_match\t{}", self.postcode_no_match)?;
        writeln!(f, "postcode_low_confidence\t{}", self.low_confidence)?;
        writeln!(f, "location_present\t{}", self.location_present)?;
        writeln!(f, "location_filled\t{}", self.location_filled)?;
        writeln!(f, "location_no_match\t{}", self.location_no_match)?;
        for s in LocationSource::ALL {
            writeln!(f, "source_{}\t{}", s, self.sources.get(&s).copied().unwrap_or(0))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub postcode: bool,
    pub ad: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { postcode: true, ad: true };
    pub const POSTCODE: Stages = Stages { postcode: true, ad: false };
    pub const AD: Stages = Stages { postcode: false, ad: true };
}

enum Change {
    None,
    Postcode(PostcodeOutcome),
}

/// Fills postcodes and/or locations in place. Records that already carry a
/// value are left alone, so a second run changes nothing.
pub fn impute_locations(
    records: &mut [EnterpriseRecord],
    tree: &AddressTree,
    lexicon: &Lexicon,
    stages: Stages,
    workers: usize,
) -> LocationReport {
    let corpus = CorpusIndex::build(records, lexicon);
    let mut report = LocationReport {
        records: records.len(),
        ..Default::default()
    };

    if stages.postcode {
        let outcomes = par_map(records, workers, |r| {
            if r.postcode.is_some() {
                Change::None
            } else {
                Change::Postcode(impute_postcode(r, tree, &corpus, lexicon))
            }
        });
        for (r, change) in records.iter_mut().zip(outcomes) {
            match change {
                Change::None => report.postcode_present += 1,
                Change::Postcode(PostcodeOutcome::Found {
                    postcode,
                    source,
                    low_confidence,
                }) => {
                    r.postcode = Some(postcode);
                    r.postcode_source = Some(source);
                    r.provenance.postcode = Origin::Imputed;
                    r.low_confidence = low_confidence;
                    report.postcode_filled += 1;
                    report.low_confidence += usize::from(low_confidence);
                }
                Change::Postcode(PostcodeOutcome::NoMatch) => report.postcode_no_match += 1,
            }
        }
    } else {
        report.postcode_present = records.iter().filter(|r| r.postcode.is_some()).count();
    }

    if stages.ad {
        let located = par_map(records, workers, |r| {
            if r.location.is_some() {
                None
            } else {
                Some(impute_ad(r, tree, lexicon))
            }
        });
        for (r, loc) in records.iter_mut().zip(located) {
            match loc {
                None => report.location_present += 1,
                Some(Some(mut loc)) => {
                    if loc.source == LocationSource::PostcodeLookup {
                        if let Some(s) = r.postcode_source {
                            loc.source = s;
                        }
                    }
                    r.provenance.location = if loc.source == LocationSource::Original {
                        Origin::Original
                    } else {
                        Origin::Imputed
                    };
                    *report.sources.entry(loc.source).or_default() += 1;
                    r.location = Some(loc);
                    report.location_filled += 1;
                }
                Some(None) => report.location_no_match += 1,
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gazetteer::build;
    use proptest::prelude::*;

    fn pc(s: &str) -> Postcode {
        s.parse().unwrap()
    }

    fn entry(p: &str, c: &str, k: &str, s: &str, code: &str) -> PostcodeEntry {
        PostcodeEntry {
            province: p.into(),
            city: c.into(),
            county: k.into(),
            street: s.into(),
            postcode: pc(code),
        }
    }

    fn fixture() -> (AddressTree, Lexicon) {
        let tree = build([
            entry("湖北省", "武汉市", "江岸区", "南京路", "430014"),
            entry("上海市", "上海市", "黄浦区", "南京路", "200001"),
        ]);
        (tree, Lexicon::demo())
    }

    fn record(id: &str, name: &str, address: &str, source: &str, postcode: Option<&str>) -> EnterpriseRecord {
        let mut r = EnterpriseRecord::new(id);
        r.name = Some(name.into()).filter(|s: &String| !s.is_empty());
        r.address = Some(address.into()).filter(|s: &String| !s.is_empty());
        r.data_source = Some(source.into()).filter(|s: &String| !s.is_empty());
        r.postcode = postcode.map(pc);
        r
    }

    #[test]
    fn probabilities_from_counts() {
        let tb = tie_break(&[(pc("100001"), 3), (pc("100002"), 1)]).unwrap();
        assert_eq!(tb.probabilities, vec![0.75, 0.25]);
        assert_eq!(tb.chosen, pc("100001"));
        assert!(!tb.low_confidence);
    }

    #[test]
    fn zero_support_falls_back_to_smallest_postcode() {
        let tb = tie_break(&[(pc("300000"), 0), (pc("100000"), 0)]).unwrap();
        assert_eq!(tb.chosen, pc("100000"));
        assert!(tb.low_confidence);
    }

    #[test]
    fn equal_probabilities_go_to_smallest_postcode() {
        let tb = tie_break(&[(pc("300000"), 2), (pc("100000"), 2), (pc("200000"), 1)]).unwrap();
        assert_eq!(tb.chosen, pc("100000"));
    }

    #[test]
    fn unique_match_from_name_and_source() {
        let (tree, lex) = fixture();
        let corpus = CorpusIndex::default();
        let r = record("E1", "武汉***物业管理有限公司", "南京路16号", "2004年注册_湖北", None);
        assert_eq!(
            impute_postcode(&r, &tree, &corpus, &lex),
            PostcodeOutcome::Found {
                postcode: pc("430014"),
                source: LocationSource::VsmMatch,
                low_confidence: false
            }
        );
    }

    #[test]
    fn tied_street_resolved_by_corpus() {
        let (tree, lex) = fixture();
        let mut records = vec![
            record("A", "", "上海市黄浦区南京路1号", "", Some("200001")),
            record("B", "", "上海市黄浦区南京路2号", "", Some("200001")),
            record("C", "", "湖北武汉江岸区南京路3号", "", Some("430014")),
        ];
        let corpus = CorpusIndex::build(&records, &lex);
        let q = record("Q", "", "南京路16号", "", None);
        assert_eq!(
            impute_postcode(&q, &tree, &corpus, &lex),
            PostcodeOutcome::Found {
                postcode: pc("200001"),
                source: LocationSource::Tiebreak,
                low_confidence: false
            }
        );
        records.clear();
        let empty = CorpusIndex::build(&records, &lex);
        assert_eq!(
            impute_postcode(&q, &tree, &empty, &lex),
            PostcodeOutcome::Found {
                postcode: pc("200001"),
                source: LocationSource::Tiebreak,
                low_confidence: true
            }
        );
    }

    #[test]
    fn no_nouns_no_match() {
        let (tree, lex) = fixture();
        let r = record("E1", "***有限公司", "16号", "", None);
        assert_eq!(impute_postcode(&r, &tree, &CorpusIndex::default(), &lex), PostcodeOutcome::NoMatch);
    }

    #[test]
    fn division_from_postcode() {
        let (tree, lex) = fixture();
        let r = record("E1", "", "南京路16号", "", Some("430014"));
        let loc = impute_ad(&r, &tree, &lex).unwrap();
        assert_eq!((loc.province.as_str(), loc.city.as_str(), loc.county.as_str()), ("湖北省", "武汉市", "江岸区"));
        assert_eq!(loc.full_address, "湖北省武汉市江岸区南京路16号");
        assert_eq!(loc.source, LocationSource::PostcodeLookup);
    }

    #[test]
    fn partial_division_is_completed() {
        let (tree, lex) = fixture();
        let r = record("E1", "", "武汉市江岸区南京路16号", "", Some("430014"));
        let loc = impute_ad(&r, &tree, &lex).unwrap();
        assert_eq!(loc.full_address, "湖北省武汉市江岸区南京路16号");
    }

    #[test]
    fn complete_address_kept() {
        let (tree, lex) = fixture();
        let r = record("E1", "", "湖北省武汉市江岸区南京路16号", "", Some("430014"));
        let loc = impute_ad(&r, &tree, &lex).unwrap();
        assert_eq!(loc.full_address, "湖北省武汉市江岸区南京路16号");
        assert_eq!(loc.source, LocationSource::Original);
    }

    #[test]
    fn unknown_postcode_is_no_match() {
        let (tree, lex) = fixture();
        assert!(impute_ad(&record("E1", "", "南京路", "", Some("999999")), &tree, &lex).is_none());
        assert!(impute_ad(&record("E1", "", "南京路", "", None), &tree, &lex).is_none());
    }

    #[test]
    fn multi_path_postcode_prefers_overlap() {
        let tree = build([
            entry("湖北省", "武汉市", "江岸区", "南京路", "430014"),
            entry("湖北省", "武汉市", "江岸区", "黄浦路", "430014"),
        ]);
        let lex = {
            let mut l = Lexicon::demo();
            l.insert("黄浦路", Pos::Ns);
            l
        };
        let loc = impute_ad(&record("E1", "", "黄浦路3号", "", Some("430014")), &tree, &lex).unwrap();
        assert_eq!(loc.street, "黄浦路");
        // no street evidence: lexicographically first path
        let loc = impute_ad(&record("E1", "", "", "", Some("430014")), &tree, &lex).unwrap();
        assert_eq!(loc.street, "南京路");
        assert_eq!(loc.full_address, "湖北省武汉市江岸区");
    }

    #[test]
    fn batch_is_idempotent_and_reports() {
        let (tree, lex) = fixture();
        let mut records = vec![
            record("A", "", "上海市黄浦区南京路1号", "", Some("200001")),
            record("B", "武汉***物业管理有限公司", "南京路16号", "", None),
            record("C", "***", "16号", "", None),
            record("D", "", "湖北省武汉市江岸区南京路3号", "", Some("430014")),
        ];
        let report = impute_locations(&mut records, &tree, &lex, Stages::ALL, 2);
        assert_eq!(report.postcode_filled, 1);
        assert_eq!(report.postcode_no_match, 1);
        assert_eq!(report.location_filled, 3);
        assert_eq!(report.location_no_match, 1);
        assert_eq!(report.sources[&LocationSource::Original], 2);
        assert_eq!(report.sources[&LocationSource::VsmMatch], 1);
        assert_eq!(records[1].provenance.postcode, Origin::Imputed);
        assert_eq!(records[1].provenance.location, Origin::Imputed);
        assert_eq!(records[0].provenance.location, Origin::Original);

        let snapshot = records.clone();
        let again = impute_locations(&mut records, &tree, &lex, Stages::ALL, 3);
        assert_eq!(records, snapshot);
        assert_eq!(again.postcode_filled + again.location_filled, 0);
    }

    #[test]
    fn complete_corpus_untouched() {
        let (tree, lex) = fixture();
        let mut records = vec![record("D", "", "湖北省武汉市江岸区南京路3号", "", Some("430014"))];
        records[0].location = impute_ad(&records[0], &tree, &lex);
        let snapshot = records.clone();
        impute_locations(&mut records, &tree, &lex, Stages::ALL, 1);
        assert_eq!(records, snapshot);
    }

    proptest! {
        #[test]
        fn tie_break_normalized_and_order_free(
            counts in proptest::collection::vec(0u64..50, 2..8),
            rot in 0usize..8,
        ) {
            let cands: Vec<(Postcode, u64)> = counts
                .iter()
                .enumerate()
                .map(|(i, &n)| (pc(&format!("{:06}", 100_000 + i * 7)), n))
                .collect();
            let tb = tie_break(&cands).unwrap();
            if counts.iter().sum::<u64>() > 0 {
                prop_assert!((tb.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let mut rotated = cands.clone();
            rotated.rotate_left(rot % cands.len());
            rotated.reverse();
            prop_assert_eq!(tie_break(&rotated).unwrap().chosen, tb.chosen);
        }
    }
}
