//! Postcode gazetteer: a province→city→county→street tree with postcode sets at
//! the leaves, plus weighted level matching of address nouns against it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::corpus::{Diagnostic, EnterpriseRecord, Postcode};
use crate::error::{Error, Result};
use crate::segmenter::{address_nouns_of, Lexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Province,
    City,
    County,
    Street,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Province, Level::City, Level::County, Level::Street];

    /// Higher levels outweigh all lower levels combined.
    pub fn weight(self) -> u32 {
        match self {
            Level::Province => 8,
            Level::City => 4,
            Level::County => 2,
            Level::Street => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PostcodeEntry {
    pub province: String,
    pub city: String,
    pub county: String,
    pub street: String,
    pub postcode: Postcode,
}

impl PostcodeEntry {
    pub fn level(&self, level: Level) -> &str {
        match level {
            Level::Province => &self.province,
            Level::City => &self.city,
            Level::County => &self.county,
            Level::Street => &self.street,
        }
    }

    /// Non-empty levels with their names, top down.
    pub fn levels(&self) -> impl Iterator<Item = (Level, &str)> {
        Level::ALL
            .into_iter()
            .map(move |l| (l, self.level(l)))
            .filter(|(_, n)| !n.is_empty())
    }

    /// Province, city and county concatenated.
    pub fn division(&self) -> String {
        format!("{}{}{}", self.province, self.city, self.county)
    }
}

/// Set of matched levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Levels(u8);

impl Levels {
    pub fn insert(&mut self, l: Level) {
        self.0 |= 1 << l as u8;
    }

    pub fn contains(self, l: Level) -> bool {
        self.0 & (1 << l as u8) != 0
    }

    pub fn iter(self) -> impl Iterator<Item = Level> {
        Level::ALL.into_iter().filter(move |&l| self.contains(l))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub entry: PostcodeEntry,
    pub degree: f64,
    pub matched: Levels,
}

#[derive(Debug, Clone)]
struct TreeNode {
    name: String,
    level: Option<Level>,
    children: BTreeMap<String, usize>,
    /// Postcodes of entries whose path ends here.
    postcodes: BTreeSet<Postcode>,
    /// Indices of entries whose path passes through this node.
    entries: Vec<usize>,
}

impl TreeNode {
    fn new(name: &str, level: Option<Level>) -> Self {
        TreeNode {
            name: name.to_string(),
            level,
            children: BTreeMap::new(),
            postcodes: BTreeSet::new(),
            entries: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AddressTree {
    nodes: Vec<TreeNode>,
    entries: Vec<PostcodeEntry>,
    /// Node name → nodes carrying that name.
    names: BTreeMap<String, Vec<usize>>,
    by_postcode: BTreeMap<Postcode, Vec<usize>>,
}

impl PartialEq for AddressTree {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

/// Leaf postcode sets and tree shape are a function of the distinct entries only,
/// so input order and duplicates do not matter.
pub fn build(entries: impl IntoIterator<Item = PostcodeEntry>) -> AddressTree {
    let entries: Vec<PostcodeEntry> = entries.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    let mut nodes = vec![TreeNode::new("", None)];
    let mut by_postcode: BTreeMap<Postcode, Vec<usize>> = BTreeMap::new();
    for (idx, e) in entries.iter().enumerate() {
        let mut at = 0;
        nodes[0].entries.push(idx);
        for (level, name) in e.levels() {
            let next = match nodes[at].children.get(name) {
                Some(&n) => n,
                None => {
                    nodes.push(TreeNode::new(name, Some(level)));
                    let n = nodes.len() - 1;
                    nodes[at].children.insert(name.to_string(), n);
                    n
                }
            };
            at = next;
            nodes[at].entries.push(idx);
        }
        nodes[at].postcodes.insert(e.postcode.clone());
        by_postcode.entry(e.postcode.clone()).or_default().push(idx);
    }
    let mut names: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate().skip(1) {
        names.entry(n.name.clone()).or_default().push(i);
    }
    AddressTree {
        nodes,
        entries,
        names,
        by_postcode,
    }
}

/// Bidirectional substring containment between a query noun and a level name.
pub fn fuzzy_eq(noun: &str, name: &str) -> bool {
    !noun.is_empty() && !name.is_empty() && (name.contains(noun) || noun.contains(name))
}

impl AddressTree {
    pub fn entries(&self) -> &[PostcodeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of tree nodes, excluding the root.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn contains_postcode(&self, p: &Postcode) -> bool {
        self.by_postcode.contains_key(p)
    }

    pub fn entries_for_postcode(&self, p: &Postcode) -> Vec<&PostcodeEntry> {
        self.by_postcode
            .get(p)
            .map(|ix| ix.iter().map(|&i| &self.entries[i]).collect())
            .unwrap_or_default()
    }

    /// Postcodes stored at the node reached by following `path` from the root.
    pub fn postcodes_at(&self, path: &[&str]) -> Option<&BTreeSet<Postcode>> {
        let mut at = 0;
        for name in path {
            at = *self.nodes[at].children.get(*name)?;
        }
        Some(&self.nodes[at].postcodes)
    }

    /// Nodes whose name fuzzy-matches any noun, with their levels.
    pub fn nodes_matching(&self, noun: &str) -> Vec<(Level, &str)> {
        self.names
            .iter()
            .filter(|(name, _)| fuzzy_eq(noun, name))
            .flat_map(|(_, ix)| ix.iter().map(|&i| (self.nodes[i].level.unwrap(), self.nodes[i].name.as_str())))
            .collect()
    }

    /// Score of `entry` against `nouns`: matched level weight over present level weight.
    pub fn degree(entry: &PostcodeEntry, nouns: &[String]) -> (f64, Levels) {
        let mut matched = Levels::default();
        let mut total = 0;
        let mut hit = 0;
        for (level, name) in entry.levels() {
            total += level.weight();
            if nouns.iter().any(|n| fuzzy_eq(n, name)) {
                hit += level.weight();
                matched.insert(level);
            }
        }
        let degree = if total == 0 { 0.0 } else { f64::from(hit) / f64::from(total) };
        (degree, matched)
    }

    /// Candidates sharing at least one fuzzy-matching level name with the query,
    /// by degree descending then postcode ascending.
    pub fn match_nouns(&self, nouns: &[String]) -> Vec<MatchResult> {
        if nouns.is_empty() {
            return Vec::new();
        }
        let mut candidates = BTreeSet::new();
        for (name, ix) in &self.names {
            if nouns.iter().any(|n| fuzzy_eq(n, name)) {
                for &i in ix {
                    candidates.extend(self.nodes[i].entries.iter().copied());
                }
            }
        }
        let mut out: Vec<MatchResult> = candidates
            .into_iter()
            .map(|i| {
                let entry = &self.entries[i];
                let (degree, matched) = Self::degree(entry, nouns);
                MatchResult {
                    entry: entry.clone(),
                    degree,
                    matched,
                }
            })
            .collect();
        // entries are already in (path, postcode) order; the sort is stable
        out.sort_by(|a, b| {
            b.degree
                .total_cmp(&a.degree)
                .then_with(|| a.entry.postcode.cmp(&b.entry.postcode))
        });
        out
    }
}

pub const GAZETTEER_HEADER: &str = "province\tcity\tcounty\tstreet\tpostcode";

/// Parses gazetteer TSV. Invalid rows are reported and skipped.
pub fn parse_entries(text: &str) -> (Vec<PostcodeEntry>, Vec<Diagnostic>) {
    let mut entries = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (i == 0 && line == GAZETTEER_HEADER) {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        let diag = |message: String| Diagnostic { line: i + 1, message };
        if cells.len() != 5 {
            diagnostics.push(diag(format!("expected 5 cells, found {}", cells.len())));
            continue;
        }
        let postcode = match cells[4].parse::<Postcode>() {
            Ok(p) => p,
            Err(e) => {
                diagnostics.push(diag(e));
                continue;
            }
        };
        if cells[0].is_empty() {
            diagnostics.push(diag("empty province".into()));
            continue;
        }
        entries.push(PostcodeEntry {
            province: cells[0].into(),
            city: cells[1].into(),
            county: cells[2].into(),
            street: cells[3].into(),
            postcode,
        });
    }
    (entries, diagnostics)
}

pub fn load_entries(path: &Path) -> Result<(Vec<PostcodeEntry>, Vec<Diagnostic>)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_entries(&text))
}

pub fn write_entries<W: Write>(mut out: W, entries: &[PostcodeEntry]) -> std::io::Result<()> {
    writeln!(out, "{GAZETTEER_HEADER}")?;
    for e in entries {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            e.province, e.city, e.county, e.street, e.postcode
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coverage {
    pub records: usize,
    /// Records whose best match carries the record's own postcode.
    pub matched: usize,
    /// Records whose postcode occurs anywhere in the tree.
    pub present: usize,
}

impl Coverage {
    pub fn match_rate(&self) -> f64 {
        ratio(self.matched, self.records)
    }

    pub fn presence_rate(&self) -> f64 {
        ratio(self.present, self.records)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric\tcount\tfraction")?;
        writeln!(f, "records\t{}\t", self.records)?;
        writeln!(f, "best_match_postcode\t{}\t{:.6}", self.matched, self.match_rate())?;
        write!(f, "postcode_in_gazetteer\t{}\t{:.6}", self.present, self.presence_rate())
    }
}

/// Checks records that carry both an address and a postcode against the tree.
pub fn validate(tree: &AddressTree, records: &[EnterpriseRecord], lexicon: &Lexicon) -> Coverage {
    let mut c = Coverage::default();
    for r in records {
        let (Some(address), Some(postcode)) = (r.address.as_deref(), r.postcode.as_ref()) else {
            continue;
        };
        c.records += 1;
        if tree.contains_postcode(postcode) {
            c.present += 1;
        }
        let nouns = address_nouns_of([address], lexicon);
        if tree
            .match_nouns(&nouns)
            .first()
            .is_some_and(|m| &m.entry.postcode == postcode)
        {
            c.matched += 1;
        }
    }
    c
}
