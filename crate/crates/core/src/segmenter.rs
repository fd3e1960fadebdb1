//! Lexicon-driven forward-maximum-matching segmentation with POS tags.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pos {
    /// noun
    N,
    /// verb
    V,
    /// gerund
    Vn,
    /// place name
    Ns,
    /// unknown or uninformative
    X,
}

impl Pos {
    pub fn as_str(self) -> &'static str {
        match self {
            Pos::N => "n",
            Pos::V => "v",
            Pos::Vn => "vn",
            Pos::Ns => "ns",
            Pos::X => "x",
        }
    }

    pub fn is_feature(self) -> bool {
        matches!(self, Pos::N | Pos::V | Pos::Vn)
    }
}

impl FromStr for Pos {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "n" => Ok(Pos::N),
            "v" => Ok(Pos::V),
            "vn" => Ok(Pos::Vn),
            "ns" => Ok(Pos::Ns),
            "x" => Ok(Pos::X),
            other => Err(format!("unknown POS tag `{other}`")),
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: HashMap<String, Pos>,
    max_len: usize,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or retags `word`. Empty words are ignored.
    pub fn insert(&mut self, word: &str, pos: Pos) {
        if word.is_empty() {
            return;
        }
        self.max_len = self.max_len.max(word.chars().count());
        self.entries.insert(word.to_string(), pos);
    }

    pub fn get(&self, word: &str) -> Option<Pos> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Pos)> {
        self.entries.iter().map(|(w, p)| (w.as_str(), *p))
    }

    pub fn parse(text: &str) -> std::result::Result<Lexicon, String> {
        let mut lex = Lexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected word<TAB>pos", i + 1))?;
            let pos = tag.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            if word.is_empty() {
                return Err(format!("line {}: empty word", i + 1));
            }
            lex.insert(word, pos);
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        let text = fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Lexicon::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Writes entries sorted by word so output is stable.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let sorted: BTreeMap<&str, Pos> = self.iter().collect();
        for (w, p) in sorted {
            writeln!(out, "{w}\t{p}")?;
        }
        Ok(())
    }

    /// A small lexicon covering the worked examples in the README.
    pub fn demo() -> Lexicon {
        const DEMO: &str = include_str!("../data/demo_lexicon.tsv");
        Lexicon::parse(DEMO).expect("bundled demo lexicon is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub pos: Pos,
    /// Character offsets `[start, end)`.
    pub span: (usize, usize),
}

pub fn segment(text: &str, lexicon: &Lexicon) -> Vec<Token> {
    // byte offset of every char boundary, including the end
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect();
    let n = bounds.len() - 1;
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < n {
        let longest = lexicon.max_len().min(n - i);
        let hit = (1..=longest).rev().find_map(|len| {
            let w = &text[bounds[i]..bounds[i + len]];
            lexicon.get(w).map(|pos| (len, pos))
        });
        let (len, pos) = hit.unwrap_or((1, Pos::X));
        tokens.push(Token {
            surface: text[bounds[i]..bounds[i + len]].to_string(),
            pos,
            span: (i, i + len),
        });
        i += len;
    }
    tokens
}

/// Nouns, verbs and gerunds in order, duplicates kept.
pub fn feature_words(tokens: &[Token]) -> Vec<&str> {
    tokens
        .iter()
        .filter(|t| t.pos.is_feature())
        .map(|t| t.surface.as_str())
        .collect()
}

/// Place-name tokens in first-seen order, de-duplicated.
pub fn address_nouns<'a>(tokens: impl IntoIterator<Item = &'a Token>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in tokens {
        if t.pos == Pos::Ns && !out.iter().any(|s| s == &t.surface) {
            out.push(t.surface.clone());
        }
    }
    out
}

/// Address nouns across several text fields, de-duplicated across fields.
pub fn address_nouns_of<'a>(fields: impl IntoIterator<Item = &'a str>, lexicon: &Lexicon) -> Vec<String> {
    let tokens: Vec<Token> = fields.into_iter().flat_map(|f| segment(f, lexicon)).collect();
    address_nouns(&tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex(entries: &[(&str, Pos)]) -> Lexicon {
        let mut l = Lexicon::new();
        for (w, p) in entries {
            l.insert(w, *p);
        }
        l
    }

    fn pairs(tokens: &[Token]) -> Vec<(&str, Pos)> {
        tokens.iter().map(|t| (t.surface.as_str(), t.pos)).collect()
    }

    #[test]
    fn enterprise_name_example() {
        let demo = Lexicon::demo();
        let tokens = segment("武汉***物业管理有限公司", &demo);
        let tagged: Vec<_> = pairs(&tokens)
            .into_iter()
            .filter(|(_, p)| *p != Pos::X)
            .collect();
        assert_eq!(tagged, vec![("武汉", Pos::Ns), ("物业", Pos::N), ("管理", Pos::Vn)]);
        assert_eq!(feature_words(&tokens), vec!["物业", "管理"]);
        assert_eq!(address_nouns(&tokens), vec!["武汉".to_string()]);
    }

    #[test]
    fn empty_input() {
        assert!(segment("", &Lexicon::demo()).is_empty());
    }

    #[test]
    fn longest_match_wins() {
        let l = lex(&[("ab", Pos::N), ("abc", Pos::Ns), ("c", Pos::V)]);
        assert_eq!(pairs(&segment("abc", &l)), vec![("abc", Pos::Ns)]);
        assert_eq!(pairs(&segment("abx", &l)), vec![("ab", Pos::N), ("x", Pos::X)]);
    }

    #[test]
    fn feature_words_keep_duplicates_and_drop_x() {
        let l = lex(&[("ab", Pos::N), ("cd", Pos::Vn)]);
        let tokens = segment("ab?cdab", &l);
        assert_eq!(feature_words(&tokens), vec!["ab", "cd", "ab"]);
        let none = segment("???", &l);
        assert!(feature_words(&none).is_empty());
        assert!(address_nouns(&none).is_empty());
    }

    #[test]
    fn address_nouns_across_fields_deduplicate() {
        let demo = Lexicon::demo();
        let nouns = address_nouns_of(["2004年注册_湖北", "湖北武汉江岸区南京路16号", "武汉***物业管理有限公司"], &demo);
        assert_eq!(nouns, vec!["湖北", "武汉", "江岸区", "南京路"]);
    }

    #[test]
    fn lexicon_file_errors() {
        assert!(Lexicon::parse("ab\tq\n").is_err());
        assert!(Lexicon::parse("ab n\n").is_err());
        assert!(Lexicon::parse("\tn\n").is_err());
        let l = Lexicon::parse("# comment\nab\tn\nabcd\tns\n").unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l.max_len(), 4);
    }

    proptest! {
        #[test]
        fn tokens_tile_input(text in "[abcxy武汉路]{0,24}") {
            let l = lex(&[("ab", Pos::N), ("abc", Pos::Ns), ("c", Pos::V), ("武汉", Pos::Ns), ("汉路", Pos::N)]);
            let tokens = segment(&text, &l);
            let joined: String = tokens.iter().map(|t| t.surface.as_str()).collect();
            prop_assert_eq!(&joined, &text);
            let mut at = 0;
            for t in &tokens {
                prop_assert_eq!(t.span.0, at);
                prop_assert!(t.span.1 > t.span.0);
                at = t.span.1;
            }
            prop_assert_eq!(at, text.chars().count());
            prop_assert_eq!(&segment(&text, &l), &tokens);
            let surfaces: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
            for w in feature_words(&tokens) {
                prop_assert!(surfaces.contains(&w));
            }
            for w in address_nouns(&tokens) {
                prop_assert!(surfaces.contains(&w.as_str()));
            }
        }
    }
}
