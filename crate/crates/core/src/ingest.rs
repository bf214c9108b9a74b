//! E-ticket validation records: CSV parsing, grouping into entities, and
//! dataset export in the same column layout.
//!
//! Expected header (case-insensitive, any column order):
//!
//! ```text
//! TicketId,w-day,d-hour,y-day,o-longitude,o-latitude,d-longitude,d-latitude
//! ```
//!
//! `TickedId` and `TicketID` are accepted for the id column. Exported
//! datasets append an `is-test` column flagging each entity's held-out trip.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, DatasetMeta, Entity, EntityKey, Trip};
use crate::error::{Error, Result};

pub const EXPECTED_HEADERS: [&str; 8] = [
    "TicketId",
    "w-day",
    "d-hour",
    "y-day",
    "o-longitude",
    "o-latitude",
    "d-longitude",
    "d-latitude",
];
const ID_ALIASES: [&str; 2] = ["ticketid", "tickedid"];
const IS_TEST: &str = "is-test";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub ticket_id: String,
    pub wday: u8,
    pub dhour: u8,
    pub yday: u16,
    pub o_lon: f64,
    pub o_lat: f64,
    pub d_lon: f64,
    pub d_lat: f64,
}

impl RawRecord {
    pub fn key(&self) -> EntityKey {
        EntityKey::new(self.ticket_id.as_str(), self.wday, self.dhour)
    }

    pub fn trip(&self) -> Result<Trip> {
        Trip::single_leg(self.o_lon, self.o_lat, self.d_lon, self.d_lat, self.yday)
    }

    fn from_trip(key: &EntityKey, t: &Trip) -> Self {
        Self {
            ticket_id: key.ticket_id.to_string(),
            wday: key.wday,
            dhour: key.dhour,
            yday: t.yday,
            o_lon: t.origin.lon,
            o_lat: t.origin.lat,
            d_lon: t.destination.lon,
            d_lat: t.destination.lat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedRecords {
    pub records: Vec<RawRecord>,
    /// `is-test` flag per record when the column is present.
    pub is_test: Option<Vec<bool>>,
    pub errors: Vec<RowError>,
}

struct Columns {
    idx: [usize; 8],
    is_test: Option<usize>,
}

fn locate_columns(headers: &csv::StringRecord) -> Result<Columns> {
    let norm: Vec<String> = headers
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let find = |names: &[&str]| norm.iter().position(|h| names.contains(&h.as_str()));
    let mut idx = [0usize; 8];
    let mut missing = Vec::new();
    for (slot, name) in EXPECTED_HEADERS.iter().enumerate() {
        let lower = name.to_ascii_lowercase();
        let found = if slot == 0 {
            find(&ID_ALIASES)
        } else {
            find(&[lower.as_str()])
        };
        match found {
            Some(i) => idx[slot] = i,
            None => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema {
            missing,
            expected: EXPECTED_HEADERS.to_vec(),
        });
    }
    Ok(Columns {
        idx,
        is_test: find(&[IS_TEST]),
    })
}

fn parse_row(
    row: &csv::StringRecord,
    cols: &Columns,
) -> std::result::Result<(RawRecord, Option<bool>), String> {
    let field = |slot: usize| -> std::result::Result<&str, String> {
        row.get(cols.idx[slot])
            .map(str::trim)
            .ok_or_else(|| format!("missing field {}", EXPECTED_HEADERS[slot]))
    };
    fn int<T: std::str::FromStr>(
        name: &str,
        s: &str,
        lo: i64,
        hi: i64,
    ) -> std::result::Result<T, String> {
        let v: i64 = s
            .parse()
            .map_err(|_| format!("{name}: `{s}` is not an integer"))?;
        if v < lo || v > hi {
            return Err(format!("{name}: {v} outside {lo}..={hi}"));
        }
        s.parse()
            .map_err(|_| format!("{name}: `{s}` is not an integer"))
    }
    let real = |slot: usize| -> std::result::Result<f64, String> {
        let s = field(slot)?;
        let v: f64 = s
            .parse()
            .map_err(|_| format!("{}: `{s}` is not a number", EXPECTED_HEADERS[slot]))?;
        if !v.is_finite() {
            return Err(format!("{}: `{s}` is not finite", EXPECTED_HEADERS[slot]));
        }
        Ok(v)
    };
    let ticket_id = field(0)?.to_string();
    if ticket_id.is_empty() {
        return Err("empty ticket id".into());
    }
    let rec = RawRecord {
        ticket_id,
        wday: int("w-day", field(1)?, 1, 7)?,
        dhour: int("d-hour", field(2)?, 0, 23)?,
        yday: int("y-day", field(3)?, 1, 366)?,
        o_lon: real(4)?,
        o_lat: real(5)?,
        d_lon: real(6)?,
        d_lat: real(7)?,
    };
    let is_test = match cols.is_test {
        None => None,
        Some(i) => match row.get(i).map(str::trim) {
            Some("1") | Some("true") => Some(true),
            Some("0") | Some("false") | Some("") | None => Some(false),
            Some(other) => return Err(format!("{IS_TEST}: `{other}` is not a flag")),
        },
    };
    Ok((rec, is_test))
}

/// Parses records in file order. Malformed rows are reported with their line
/// number and skipped; a missing column fails the whole parse.
pub fn parse_csv<R: Read>(input: R) -> Result<ParsedRecords> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let cols = locate_columns(reader.headers()?)?;
    let mut out = ParsedRecords {
        is_test: cols.is_test.map(|_| Vec::new()),
        ..ParsedRecords::default()
    };
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row, &cols) {
            Ok((rec, flag)) => {
                out.records.push(rec);
                if let (Some(flags), Some(f)) = (out.is_test.as_mut(), flag) {
                    flags.push(f);
                }
            }
            Err(message) => out.errors.push(RowError { line, message }),
        }
    }
    Ok(out)
}

pub fn parse_csv_path(path: impl AsRef<Path>) -> Result<ParsedRecords> {
    parse_csv(File::open(path)?)
}

/// How groups with more than `L + 1` records are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupPolicy {
    /// Keep only groups with exactly `L + 1` records.
    Exact,
    /// Keep the earliest `L + 1` records of any group with enough of them.
    Earliest,
}

impl std::str::FromStr for GroupPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(GroupPolicy::Exact),
            "earliest" => Ok(GroupPolicy::Earliest),
            other => Err(format!(
                "unknown policy `{other}` (expected exact|earliest)"
            )),
        }
    }
}

impl std::fmt::Display for GroupPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GroupPolicy::Exact => "exact",
            GroupPolicy::Earliest => "earliest",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedGroup {
    pub key: EntityKey,
    pub records: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub groups: usize,
    pub eligible: usize,
    pub excluded: Vec<ExcludedGroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grouped {
    pub dataset: Dataset,
    pub report: GroupReport,
}

/// Groups records by `(ticket, weekday, hour)`. Per group, the first `L`
/// records by y-day form the history and record `L + 1` the test trip.
pub fn group_entities(records: &[RawRecord], l: usize, policy: GroupPolicy) -> Result<Grouped> {
    if l < 1 {
        return Err(Error::InvalidExperiment(
            "history length must be >= 1".into(),
        ));
    }
    let mut groups: BTreeMap<EntityKey, Vec<&RawRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.key()).or_default().push(r);
    }
    let mut report = GroupReport {
        groups: groups.len(),
        ..GroupReport::default()
    };
    let mut entities = Vec::new();
    for (key, mut recs) in groups {
        recs.sort_by_key(|r| r.yday);
        let n = recs.len();
        let exclude = |reason: String| ExcludedGroup {
            key: key.clone(),
            records: n,
            reason,
        };
        if let Some(w) = recs.windows(2).find(|w| w[0].yday == w[1].yday) {
            report
                .excluded
                .push(exclude(format!("duplicate y-day {}", w[0].yday)));
            continue;
        }
        let wanted = l + 1;
        if n < wanted || (policy == GroupPolicy::Exact && n != wanted) {
            report.excluded.push(exclude(format!(
                "{n} records, {policy} policy needs {wanted}"
            )));
            continue;
        }
        let mut trips = recs[..wanted]
            .iter()
            .map(|r| r.trip())
            .collect::<Result<Vec<_>>>()?;
        let test = trips.pop();
        entities.push(Entity::new(key, trips, test)?);
    }
    report.eligible = entities.len();
    let meta = DatasetMeta {
        sources: vec!["records".into()],
        policy: Some(policy.to_string()),
        ..DatasetMeta::default()
    };
    Ok(Grouped {
        dataset: Dataset::new(entities, meta)?,
        report,
    })
}

/// Union of two datasets with disjoint keys. Evaluation subsets, if any,
/// are united as well.
pub fn merge_datasets(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    let (mut entities, ma) = a.clone().into_parts();
    let (more, mb) = b.clone().into_parts();
    entities.extend(more);
    let eval_subset = match (ma.eval_subset, mb.eval_subset) {
        (None, None) => None,
        (x, y) => Some(
            x.into_iter()
                .chain(y)
                .flatten()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        ),
    };
    let meta = DatasetMeta {
        sources: ma.sources.into_iter().chain(mb.sources).collect(),
        history_lengths: vec![],
        policy: ma.policy.or(mb.policy),
        seed: ma.seed.or(mb.seed),
        eval_subset,
        notes: ma.notes.into_iter().chain(mb.notes).collect(),
    };
    Dataset::new(entities, meta)
}

/// Seeded subsample of `n` entities (the whole dataset if it has no more).
pub fn subsample(dataset: &Dataset, n: usize, seed: u64) -> Dataset {
    if n >= dataset.len() {
        return dataset.clone();
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    let entities = idx.iter().map(|&i| dataset.entities()[i].clone()).collect();
    let mut meta = dataset.meta().clone();
    meta.eval_subset = None;
    meta.notes.push(format!("subsample n={n} seed={seed}"));
    Dataset::new(entities, meta).expect("subset of a valid dataset")
}

fn write_rows<W: Write>(
    rows: impl Iterator<Item = (RawRecord, Option<bool>)>,
    with_flag: bool,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = EXPECTED_HEADERS.to_vec();
    if with_flag {
        header.push(IS_TEST);
    }
    w.write_record(&header)?;
    for (r, flag) in rows {
        let mut fields = vec![
            r.ticket_id,
            r.wday.to_string(),
            r.dhour.to_string(),
            r.yday.to_string(),
            r.o_lon.to_string(),
            r.o_lat.to_string(),
            r.d_lon.to_string(),
            r.d_lat.to_string(),
        ];
        if with_flag {
            fields.push(if flag.unwrap_or(false) { "1" } else { "0" }.into());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes raw records in the input layout.
pub fn export_records_csv<W: Write>(records: &[RawRecord], out: W) -> Result<()> {
    write_rows(records.iter().cloned().map(|r| (r, None)), false, out)
}

fn dataset_rows(dataset: &Dataset) -> impl Iterator<Item = (RawRecord, Option<bool>)> + '_ {
    dataset.entities().iter().flat_map(|e| {
        let key = e.key();
        e.history()
            .iter()
            .map(move |t| (RawRecord::from_trip(key, t), Some(false)))
            .chain(
                e.test_trip()
                    .map(move |t| (RawRecord::from_trip(key, t), Some(true))),
            )
    })
}

/// One row per history trip and per test trip, test rows flagged in `is-test`.
/// Floats are written in shortest round-trip form.
pub fn export_dataset_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    write_rows(dataset_rows(dataset), true, out)
}

/// Records of a dataset (history and test trips) without the flag column.
pub fn dataset_records(dataset: &Dataset) -> Vec<RawRecord> {
    dataset_rows(dataset).map(|(r, _)| r).collect()
}

/// Rebuilds a dataset from an export with an `is-test` column.
pub fn read_dataset_csv<R: Read>(input: R, source: &str) -> Result<Dataset> {
    let parsed = parse_csv(input)?;
    if let Some(e) = parsed.errors.first() {
        return Err(Error::InvalidExperiment(format!(
            "dataset file line {}: {}",
            e.line, e.message
        )));
    }
    let flags = parsed.is_test.ok_or_else(|| Error::Schema {
        missing: vec![IS_TEST.into()],
        expected: EXPECTED_HEADERS.to_vec(),
    })?;
    let mut groups: BTreeMap<EntityKey, (Vec<Trip>, Vec<Trip>)> = BTreeMap::new();
    for (rec, is_test) in parsed.records.iter().zip(flags) {
        let g = groups.entry(rec.key()).or_default();
        if is_test { &mut g.1 } else { &mut g.0 }.push(rec.trip()?);
    }
    let mut entities = Vec::with_capacity(groups.len());
    for (key, (history, mut tests)) in groups {
        if tests.len() > 1 {
            return Err(Error::InvalidExperiment(format!(
                "entity {key} has {} test trips",
                tests.len()
            )));
        }
        entities.push(Entity::new(key, history, tests.pop())?);
    }
    Dataset::new(entities, DatasetMeta::named(source))
}

pub fn read_dataset_path(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    read_dataset_csv(File::open(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRAGMENT: &str = "\
TickedId,w-day,d-hour,y-day,o-longitude,o-latitude,d-longitude,d-latitude
tid000001,2,13,65,6.160129,48.698788,6.178392,48.693237
tid000001,2,13,72,6.162016,48.698792,6.178392,48.693237
tid000001,2,13,93,6.160129,48.698788,6.178392,48.693237
tid000001,2,13,107,6.162016,48.698792,6.178392,48.693237
tid000002,4,12,74,6.152813,48.654213,6.195424,48.69561
tid000002,4,12,81,6.152813,48.654213,6.16601,48.666126
tid000002,4,12,88,6.152813,48.654213,6.195424,48.69561
tid000003,2,8,65,6.177089,48.688473,6.165807,48.682377
tid000003,2,8,72,6.177089,48.688473,6.16719,48.679199
tid000003,2,8,79,6.177089,48.688473,6.165807,48.682377
tid000003,2,8,93,6.177089,48.688473,6.165807,48.682377
tid000003,2,8,114,6.177089,48.688473,6.165807,48.682377
tid000003,2,8,121,6.177089,48.688473,6.165807,48.682377
tid000003,2,8,128,6.177089,48.688473,6.165807,48.682377
";

    fn ydays(e: &Entity) -> (Vec<u16>, u16) {
        (
            e.history().iter().map(|t| t.yday).collect(),
            e.test_trip().unwrap().yday,
        )
    }

    #[test]
    fn parses_fragment() {
        let p = parse_csv(FRAGMENT.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 14);
        assert!(p.errors.is_empty());
        let ids: BTreeSet<&str> = p.records.iter().map(|r| r.ticket_id.as_str()).collect();
        assert_eq!(ids.len(), 3);
        assert_eq!(p.records[5].d_lon, 6.16601);
    }

    #[test]
    fn header_aliases_and_case() {
        for id in ["TicketId", "TICKETID", "TicketID", "tickedid"] {
            let text = format!(
                "{id}, W-Day ,d-hour,y-day,o-longitude,o-latitude,d-longitude,D-LATITUDE\n"
            );
            assert!(parse_csv(text.as_bytes()).unwrap().records.is_empty());
        }
        let err = parse_csv("user,w-day,d-hour\n".as_bytes()).unwrap_err();
        match err {
            Error::Schema { missing, .. } => {
                assert!(missing.contains(&"TicketId".to_string()));
                assert!(missing.contains(&"d-latitude".to_string()));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_rows_reported_by_line() {
        let text = "\
TicketId,w-day,d-hour,y-day,o-longitude,o-latitude,d-longitude,d-latitude
a,1,2,3,6.1,48.6,6.2,abc
a,1,2,4,6.1,48.6,6.2,48.7
a,9,2,5,6.1,48.6,6.2,48.7
a,1,2,6,6.1,48.6
";
        let p = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 1);
        let lines: Vec<u64> = p.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, [2, 4, 5]);
        assert!(p.errors[0].message.contains("d-latitude"));
    }

    #[test]
    fn group_earliest_l3() {
        let p = parse_csv(FRAGMENT.as_bytes()).unwrap();
        let g = group_entities(&p.records, 3, GroupPolicy::Earliest).unwrap();
        assert_eq!(g.dataset.len(), 2);
        let t1 = g.dataset.get(&EntityKey::new("tid000001", 2, 13)).unwrap();
        assert_eq!(ydays(t1), (vec![65, 72, 93], 107));
        let t3 = g.dataset.get(&EntityKey::new("tid000003", 2, 8)).unwrap();
        assert_eq!(ydays(t3), (vec![65, 72, 79], 93));
        assert_eq!(g.report.groups, 3);
        assert_eq!(g.report.eligible, 2);
        assert_eq!(g.report.excluded.len(), 1);
        assert_eq!(&*g.report.excluded[0].key.ticket_id, "tid000002");
    }

    #[test]
    fn group_exact_l6() {
        let p = parse_csv(FRAGMENT.as_bytes()).unwrap();
        let g = group_entities(&p.records, 6, GroupPolicy::Exact).unwrap();
        let ids: Vec<&str> = g.dataset.keys().map(|k| &*k.ticket_id).collect();
        assert_eq!(ids, ["tid000003"]);
        assert_eq!(g.dataset.entities()[0].len(), 6);
        // exact L=3 drops tid000003 (7 records) but keeps tid000001 (4)
        let g = group_entities(&p.records, 3, GroupPolicy::Exact).unwrap();
        let ids: Vec<&str> = g.dataset.keys().map(|k| &*k.ticket_id).collect();
        assert_eq!(ids, ["tid000001"]);
    }

    #[test]
    fn duplicate_yday_rejects_group() {
        let mut recs = parse_csv(FRAGMENT.as_bytes()).unwrap().records;
        recs[1].yday = 65;
        let g = group_entities(&recs, 2, GroupPolicy::Earliest).unwrap();
        let ex: Vec<_> = g
            .report
            .excluded
            .iter()
            .filter(|e| e.reason.contains("duplicate"))
            .collect();
        assert_eq!(ex.len(), 1);
        assert_eq!(&*ex[0].key.ticket_id, "tid000001");
        assert!(g.dataset.get(&EntityKey::new("tid000001", 2, 13)).is_none());
    }

    #[test]
    fn merge_rules() {
        let recs = parse_csv(FRAGMENT.as_bytes()).unwrap().records;
        let d = group_entities(&recs, 2, GroupPolicy::Earliest)
            .unwrap()
            .dataset;
        let empty = Dataset::empty(DatasetMeta::named("none"));
        let m = merge_datasets(&d, &empty).unwrap();
        assert_eq!(m.entities(), d.entities());
        assert_eq!(
            m.meta().sources,
            vec!["records".to_string(), "none".to_string()]
        );
        assert!(matches!(
            merge_datasets(&d, &d),
            Err(Error::DuplicateEntity(_))
        ));

        let sub = d
            .clone()
            .with_eval_subset(Some(vec![EntityKey::new("tid000002", 4, 12)]));
        let m = merge_datasets(&sub, &empty).unwrap();
        assert_eq!(m.meta().eval_subset.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn export_round_trip() {
        let recs = parse_csv(FRAGMENT.as_bytes()).unwrap().records;
        let d = group_entities(&recs, 3, GroupPolicy::Earliest)
            .unwrap()
            .dataset;
        let mut buf = Vec::new();
        export_dataset_csv(&d, &mut buf).unwrap();
        let back = read_dataset_csv(buf.as_slice(), "buf").unwrap();
        assert_eq!(back.entities(), d.entities());

        let reparsed = parse_csv(buf.as_slice()).unwrap();
        let regrouped = group_entities(&reparsed.records, 3, GroupPolicy::Exact)
            .unwrap()
            .dataset;
        assert_eq!(regrouped.entities(), d.entities());

        let mut plain = Vec::new();
        export_records_csv(&recs, &mut plain).unwrap();
        assert_eq!(parse_csv(plain.as_slice()).unwrap().records, recs);
    }

    #[test]
    fn subsample_is_seeded() {
        let recs = parse_csv(FRAGMENT.as_bytes()).unwrap().records;
        let d = group_entities(&recs, 2, GroupPolicy::Earliest)
            .unwrap()
            .dataset;
        assert_eq!(d.len(), 3);
        let a = subsample(&d, 2, 5);
        assert_eq!(a.len(), 2);
        assert_eq!(a, subsample(&d, 2, 5));
        assert_eq!(subsample(&d, 10, 5).entities(), d.entities());
    }

    #[test]
    fn empty_body_parses_to_nothing() {
        let p = parse_csv(
            "TicketId,w-day,d-hour,y-day,o-longitude,o-latitude,d-longitude,d-latitude\n"
                .as_bytes(),
        )
        .unwrap();
        assert!(p.records.is_empty() && p.errors.is_empty());
    }
}
