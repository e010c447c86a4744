use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CSV_HEADER: [&str; 6] = [
    "record_id",
    "short_description",
    "medium_description",
    "etim",
    "hs_code",
    "assurance_level",
];

/// Optional trailing column marking upsample duplicates in prepared files.
const DUPLICATE_COLUMN: &str = "upsampled";

/// A six-digit Harmonized System code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct HsCode(String);

impl HsCode {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() == 6 && s.bytes().all(|b| b.is_ascii_digit()) {
            Ok(HsCode(s.to_string()))
        } else {
            Err(Error::invalid(format!("hs_code {s:?} is not exactly six decimal digits")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for HsCode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        HsCode::parse(&s)
    }
}

impl From<HsCode> for String {
    fn from(c: HsCode) -> String {
        c.0
    }
}

impl fmt::Display for HsCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub record_id: String,
    pub short_description: String,
    pub medium_description: String,
    pub etim: Option<String>,
    pub hs_code: HsCode,
    pub assurance_level: u8,
    /// Set on records created by upsampling; the original keeps `false`.
    pub upsampled: bool,
}

impl RawRecord {
    pub fn new(
        record_id: &str,
        short_description: &str,
        medium_description: &str,
        etim: Option<&str>,
        hs_code: &str,
        assurance_level: u8,
    ) -> Result<Self> {
        let rec = RawRecord {
            record_id: record_id.to_string(),
            short_description: short_description.to_string(),
            medium_description: medium_description.to_string(),
            etim: etim.filter(|e| !e.is_empty()).map(str::to_string),
            hs_code: HsCode::parse(hs_code)?,
            assurance_level,
            upsampled: false,
        };
        rec.validate()?;
        Ok(rec)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.assurance_level) {
            return Err(Error::invalid(format!(
                "assurance_level {} outside 1..=4",
                self.assurance_level
            )));
        }
        if self.short_description.trim().is_empty() && self.medium_description.trim().is_empty() {
            return Err(Error::invalid("both short and medium descriptions are empty"));
        }
        Ok(())
    }
}

/// An ordered collection of labeled records with a per-class position index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    records: Vec<RawRecord>,
    class_index: BTreeMap<HsCode, Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate ids among non-upsampled records.
    pub fn new(records: Vec<RawRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in records.iter().filter(|r| !r.upsampled) {
            if !seen.insert(r.record_id.as_str()) {
                return Err(Error::invalid(format!("duplicate record_id {}", r.record_id)));
            }
        }
        Ok(Self::from_trusted(records))
    }

    /// Builds a dataset from records already known to satisfy the invariants
    /// (e.g. a subset of an existing dataset).
    pub(crate) fn from_trusted(records: Vec<RawRecord>) -> Self {
        let mut class_index: BTreeMap<HsCode, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            class_index.entry(r.hs_code.clone()).or_default().push(i);
        }
        Dataset { records, class_index }
    }

    pub fn records(&self) -> &[RawRecord] {
        &self.records
    }

    pub fn class_index(&self) -> &BTreeMap<HsCode, Vec<usize>> {
        &self.class_index
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Classes in ascending code order; the position is the label id.
    pub fn classes(&self) -> Vec<HsCode> {
        self.class_index.keys().cloned().collect()
    }

    pub fn class_counts(&self) -> BTreeMap<HsCode, usize> {
        self.class_index.iter().map(|(c, v)| (c.clone(), v.len())).collect()
    }

    /// Sub-dataset made of the given positions, kept in ascending order.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        let mut pos = positions.to_vec();
        pos.sort_unstable();
        Dataset::from_trusted(pos.into_iter().map(|i| self.records[i].clone()).collect())
    }
}

/// Unlabeled input row used for inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptionRow {
    pub record_id: String,
    pub short_description: String,
    pub medium_description: String,
    pub etim: Option<String>,
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(file))
}

fn header_positions(headers: &csv::StringRecord, required: &[&str]) -> Result<Vec<usize>> {
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::InvalidRecord { line: 1, reason: format!("missing column {name}") })
        })
        .collect()
}

/// Reads a labeled CSV. Every violation is reported with its line number.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    let cols = header_positions(&headers, &CSV_HEADER)?;
    let dup_col = headers.iter().position(|h| h.trim() == DUPLICATE_COLUMN);

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |reason: String| Error::InvalidRecord { line, reason };
        let field = |i: usize| row.get(cols[i]).unwrap_or("");
        let level: u8 = field(5)
            .trim()
            .parse()
            .map_err(|_| bad(format!("assurance_level {:?} is not an integer", field(5))))?;
        let etim = field(3);
        let mut rec = RawRecord::new(
            field(0),
            field(1),
            field(2),
            if etim.is_empty() { None } else { Some(etim) },
            field(4),
            level,
        )
        .map_err(|e| bad(e.to_string()))?;
        if let Some(c) = dup_col {
            rec.upsampled = matches!(row.get(c).map(str::trim), Some("1") | Some("true"));
        }
        records.push(rec);
    }
    Dataset::new(records).map_err(|e| match e {
        Error::InvalidArgument(reason) => Error::InvalidRecord { line: 0, reason },
        other => other,
    })
}

/// Reads description rows for inference; label columns are ignored if present.
pub fn read_descriptions(path: &Path) -> Result<Vec<DescriptionRow>> {
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    let cols = header_positions(&headers, &CSV_HEADER[..3])?;
    let etim_col = headers.iter().position(|h| h.trim() == "etim");
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| row.get(cols[i]).unwrap_or("").to_string();
        let rec = DescriptionRow {
            record_id: get(0),
            short_description: get(1),
            medium_description: get(2),
            etim: etim_col.and_then(|c| row.get(c)).filter(|s| !s.is_empty()).map(str::to_string),
        };
        if rec.record_id.trim().is_empty() {
            return Err(Error::InvalidRecord { line, reason: "empty record_id".into() });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Writes a dataset in the input schema. A trailing `upsampled` column is
/// added only when the dataset contains upsample duplicates.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let with_flag = data.records().iter().any(|r| r.upsampled);
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if with_flag {
        header.push(DUPLICATE_COLUMN);
    }
    w.write_record(&header)?;
    for r in data.records() {
        let level = r.assurance_level.to_string();
        let mut row = vec![
            r.record_id.as_str(),
            r.short_description.as_str(),
            r.medium_description.as_str(),
            r.etim.as_deref().unwrap_or(""),
            r.hs_code.as_str(),
            level.as_str(),
        ];
        if with_flag {
            row.push(if r.upsampled { "1" } else { "0" });
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
