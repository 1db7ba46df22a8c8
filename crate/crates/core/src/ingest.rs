//! Dataset parsing, id mapping and seeded train/validation/test splitting.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Rating, RatingRange, SparseRatings};
use crate::error::{Error, Result};

/// One line of a ratings file, before id mapping.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatingFormat {
    /// `user<TAB>item<TAB>rating[<TAB>timestamp]` (MovieLens 100K).
    Tsv,
    /// `user::item::rating[::timestamp]` (MovieLens 1M).
    DoubleColon,
}

impl RatingFormat {
    fn separator(self) -> &'static str {
        match self {
            RatingFormat::Tsv => "\t",
            RatingFormat::DoubleColon => "::",
        }
    }
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" | "tab" => Ok(RatingFormat::Tsv),
            "double-colon" | "dat" => Ok(RatingFormat::DoubleColon),
            other => Err(Error::usage(format!("unknown rating format '{other}'"))),
        }
    }
}

impl fmt::Display for RatingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatingFormat::Tsv => "tsv",
            RatingFormat::DoubleColon => "double-colon",
        })
    }
}

/// Parses one record per non-blank line, in file order.
pub fn parse_ratings<R: BufRead>(source: R, format: RatingFormat) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(format.separator()).map(str::trim).collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 or 4 fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty user or item id".into(),
            });
        }
        let rating: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid rating '{}'", fields[2]),
        })?;
        if !rating.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("non-finite rating '{}'", fields[2]),
            });
        }
        let timestamp = match fields.get(3) {
            Some(t) => Some(t.parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid timestamp '{t}'"),
            })?),
            None => None,
        };
        records.push(RawRecord {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            rating,
            timestamp,
        });
    }
    Ok(records)
}

/// Fails on the first record whose rating lies outside `range`.
pub fn check_scale(records: &[RawRecord], range: RatingRange) -> Result<()> {
    match records
        .iter()
        .position(|r| r.rating < range.min || r.rating > range.max)
    {
        Some(pos) => Err(Error::usage(format!(
            "record {} has rating {} outside [{}, {}]",
            pos + 1,
            records[pos].rating,
            range.min,
            range.max
        ))),
        None => Ok(()),
    }
}

/// Keeps records whose item occurs at least `min_count` times in `records`.
/// Applied once, not iterated to a fixpoint.
pub fn filter_min_item_ratings(records: Vec<RawRecord>, min_count: usize) -> Vec<RawRecord> {
    if min_count <= 1 {
        return records;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in &records {
        *counts.entry(r.item.as_str()).or_default() += 1;
    }
    let keep: Vec<bool> = records
        .iter()
        .map(|r| counts[r.item.as_str()] >= min_count)
        .collect();
    records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}

/// Dense contiguous indices for external ids, assigned in first-seen order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdIndex {
    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::usage(format!("duplicate id '{id}'")));
            }
        }
        Ok(IdIndex { ids, lookup })
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.lookup.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.lookup.insert(id.to_string(), i);
        i
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn external(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// User and item id maps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    pub users: IdIndex,
    pub items: IdIndex,
}

impl IdMap {
    pub fn from_records(records: &[RawRecord]) -> Self {
        let mut map = IdMap::default();
        for r in records {
            map.users.intern(&r.user);
            map.items.intern(&r.item);
        }
        map
    }

    fn to_rating(&self, r: &RawRecord) -> Rating {
        Rating::new(
            self.users.lookup[&r.user],
            self.items.lookup[&r.item],
            r.rating,
        )
    }

    fn ratings(&self, records: &[RawRecord], indices: &[usize]) -> Result<SparseRatings> {
        SparseRatings::new(
            self.users.len(),
            self.items.len(),
            indices.iter().map(|&i| self.to_rating(&records[i])).collect(),
        )
    }
}

/// Train/validation/test partition sharing one id space.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: SparseRatings,
    pub validation: SparseRatings,
    pub test: SparseRatings,
    pub ids: IdMap,
}

/// Sizes of a split of `n` records: `(train, validation, test)`.
pub fn split_sizes(n: usize, train_fraction: f64, validation_fraction: f64) -> (usize, usize, usize) {
    let pool = (train_fraction * n as f64).floor() as usize;
    let validation = (validation_fraction * pool as f64).floor() as usize;
    (pool - validation, validation, n - pool)
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::usage(format!("{name} must lie in (0, 1), got {f}")))
    }
}

/// Seeded uniform partition of record positions into `(train, validation, test)`,
/// each sorted ascending.
fn partition(
    n: usize,
    train_fraction: f64,
    validation_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (n_train, n_val, _) = split_sizes(n, train_fraction, validation_fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut validation = order[..n_val].to_vec();
    let mut train = order[n_val..n_val + n_train].to_vec();
    let mut test = order[n_val + n_train..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    (train, validation, test)
}

/// Disjoint seeded random split. Test receives `N − ⌊f_train·N⌋` records and
/// validation `⌊f_val·⌊f_train·N⌋⌋` taken out of the training pool. Id maps
/// cover the full record set so every user and item is indexable.
pub fn split(
    records: &[RawRecord],
    train_fraction: f64,
    validation_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if records.is_empty() {
        return Err(Error::usage("cannot split an empty record set"));
    }
    check_fraction("train_fraction", train_fraction)?;
    check_fraction("validation_fraction", validation_fraction)?;
    let ids = IdMap::from_records(records);
    let (train, validation, test) = partition(records.len(), train_fraction, validation_fraction, seed);
    Ok(DatasetSplit {
        train: ids.ratings(records, &train)?,
        validation: ids.ratings(records, &validation)?,
        test: ids.ratings(records, &test)?,
        ids,
    })
}

/// When the minimum-item-count filter runs relative to splitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterOrder {
    /// Filter the full record set, then split.
    #[default]
    BeforeSplit,
    /// Split first, then drop train/validation records of items with fewer
    /// than the minimum count in the training pool. Test is untouched.
    AfterSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub min_item_ratings: usize,
    #[serde(default)]
    pub filter_order: FilterOrder,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            train_fraction: 0.8,
            validation_fraction: 0.1,
            min_item_ratings: 0,
            filter_order: FilterOrder::BeforeSplit,
        }
    }
}

/// Full ingest pipeline: optional item filter plus seeded split.
pub fn prepare_split(records: Vec<RawRecord>, options: &SplitOptions, seed: u64) -> Result<DatasetSplit> {
    match options.filter_order {
        FilterOrder::BeforeSplit => {
            let records = filter_min_item_ratings(records, options.min_item_ratings);
            split(&records, options.train_fraction, options.validation_fraction, seed)
        }
        FilterOrder::AfterSplit => {
            if records.is_empty() {
                return Err(Error::usage("cannot split an empty record set"));
            }
            check_fraction("train_fraction", options.train_fraction)?;
            check_fraction("validation_fraction", options.validation_fraction)?;
            let ids = IdMap::from_records(&records);
            let (train, validation, test) = partition(
                records.len(),
                options.train_fraction,
                options.validation_fraction,
                seed,
            );
            let mut pool_counts: HashMap<&str, usize> = HashMap::new();
            for &i in train.iter().chain(&validation) {
                *pool_counts.entry(records[i].item.as_str()).or_default() += 1;
            }
            let keep = |idx: &Vec<usize>| -> Vec<usize> {
                idx.iter()
                    .copied()
                    .filter(|&i| pool_counts[records[i].item.as_str()] >= options.min_item_ratings)
                    .collect()
            };
            let (train, validation) = (keep(&train), keep(&validation));
            Ok(DatasetSplit {
                train: ids.ratings(&records, &train)?,
                validation: ids.ratings(&records, &validation)?,
                test: ids.ratings(&records, &test)?,
                ids,
            })
        }
    }
}

/// Directed trust/friendship pairs over internal user indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SocialEdges {
    pub edges: Vec<(usize, usize)>,
}

impl SocialEdges {
    pub fn reversed(&self) -> SocialEdges {
        SocialEdges {
            edges: self.edges.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SocialParse {
    pub edges: SocialEdges,
    /// Edges naming a user absent from the rating data.
    pub unknown_dropped: usize,
    pub self_loops_dropped: usize,
}

/// Parses whitespace-separated `user user` lines. Columns past the second
/// (e.g. trust weights) are ignored.
pub fn parse_social<R: BufRead>(source: R, users: &IdIndex) -> Result<SocialParse> {
    let mut out = SocialParse::default();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let (a, b) = match (fields.next(), fields.next()) {
            (None, _) => continue,
            (Some(a), Some(b)) => (a, b),
            (Some(_), None) => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "expected two user ids".into(),
                })
            }
        };
        match (users.index_of(a), users.index_of(b)) {
            (Some(i), Some(k)) if i == k => out.self_loops_dropped += 1,
            (Some(i), Some(k)) => out.edges.edges.push((i, k)),
            _ => out.unknown_dropped += 1,
        }
    }
    if out.unknown_dropped > 0 {
        log::warn!(
            "dropped {} social edges referencing unknown users",
            out.unknown_dropped
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn rec(user: &str, item: &str, rating: f64) -> RawRecord {
        RawRecord {
            user: user.into(),
            item: item.into(),
            rating,
            timestamp: None,
        }
    }

    #[test]
    fn parses_tab_format() {
        let recs = parse_ratings(Cursor::new("196\t242\t3\t881250949\n"), RatingFormat::Tsv).unwrap();
        assert_eq!(
            recs,
            vec![RawRecord {
                user: "196".into(),
                item: "242".into(),
                rating: 3.0,
                timestamp: Some(881250949)
            }]
        );
    }

    #[test]
    fn parses_double_colon_format() {
        let recs = parse_ratings(Cursor::new("1::1193::5::978300760\r\n"), RatingFormat::DoubleColon).unwrap();
        assert_eq!(recs[0].user, "1");
        assert_eq!(recs[0].item, "1193");
        assert_eq!(recs[0].rating, 5.0);
        assert_eq!(recs[0].timestamp, Some(978300760));
    }

    #[test]
    fn missing_fields_report_line_number() {
        let err = parse_ratings(Cursor::new("196\t242"), RatingFormat::Tsv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_ratings(Cursor::new("1\t2\t3\n\n1\t2\tx\n"), RatingFormat::Tsv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(parse_ratings(Cursor::new(""), RatingFormat::Tsv).unwrap().is_empty());
    }

    #[test]
    fn item_filter_threshold() {
        let recs = vec![
            rec("1", "a", 1.0),
            rec("2", "a", 2.0),
            rec("3", "a", 3.0),
            rec("1", "b", 4.0),
            rec("2", "b", 5.0),
        ];
        let kept = filter_min_item_ratings(recs.clone(), 3);
        assert_eq!(kept.len(), 3);
        assert!(kept.iter().all(|r| r.item == "a"));
        assert_eq!(filter_min_item_ratings(recs.clone(), 0), recs);
        assert_eq!(filter_min_item_ratings(recs.clone(), 1), recs);
    }

    #[test]
    fn split_size_arithmetic() {
        assert_eq!(split_sizes(10, 0.8, 0.1), (8, 0, 2));
        assert_eq!(split_sizes(100, 0.8, 0.1), (72, 8, 20));
        assert_eq!(split_sizes(100_000, 0.8, 0.1), (72_000, 8_000, 20_000));
    }

    #[test]
    fn split_is_seeded_and_sized() {
        let recs: Vec<_> = (0..10).map(|i| rec(&format!("u{}", i % 3), &format!("i{i}"), 3.0)).collect();
        let a = split(&recs, 0.8, 0.1, 7).unwrap();
        let b = split(&recs, 0.8, 0.1, 7).unwrap();
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (8, 0, 2));
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.ids.users.len(), 3);
        assert_eq!(a.ids.items.len(), 10);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(matches!(split(&[], 0.8, 0.1, 0), Err(Error::Usage(_))));
        let recs = vec![rec("1", "a", 1.0)];
        assert!(split(&recs, 1.0, 0.1, 0).is_err());
        assert!(split(&recs, 0.8, 0.0, 0).is_err());
    }

    #[test]
    fn social_edges_policy() {
        let users = IdIndex::from_ids(vec!["1".into(), "2".into(), "7".into()]).unwrap();
        let parsed = parse_social(Cursor::new("1 2\n1 999\n7 7\n\n2\t1 0.5\n"), &users).unwrap();
        assert_eq!(parsed.edges.edges, vec![(0, 1), (1, 0)]);
        assert_eq!(parsed.unknown_dropped, 1);
        assert_eq!(parsed.self_loops_dropped, 1);
        let err = parse_social(Cursor::new("1 2\n3\n"), &users).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn after_split_filter_keeps_test_untouched() {
        let mut recs = Vec::new();
        for u in 0..20 {
            recs.push(rec(&u.to_string(), "popular", 4.0));
        }
        recs.push(rec("0", "rare", 2.0));
        let opts = SplitOptions {
            min_item_ratings: 3,
            filter_order: FilterOrder::AfterSplit,
            ..SplitOptions::default()
        };
        let s = prepare_split(recs, &opts, 3).unwrap();
        let rare = s.ids.items.index_of("rare").unwrap();
        assert!(s.train.triples().iter().all(|r| r.item != rare));
        assert!(s.validation.triples().iter().all(|r| r.item != rare));
        assert_eq!(s.test.len(), 5);
    }
}
