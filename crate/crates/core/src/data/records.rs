use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Behavior {
    Click,
    Collect,
    Cart,
    Purchase,
}

impl Behavior {
    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Click => "click",
            Behavior::Collect => "collect",
            Behavior::Cart => "cart",
            Behavior::Purchase => "purchase",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Behavior {
    type Err = String;

    /// Accepts the long names and the Taobao log codes (`pv`, `fav`, `cart`, `buy`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "click" | "pv" => Ok(Behavior::Click),
            "collect" | "fav" => Ok(Behavior::Collect),
            "cart" => Ok(Behavior::Cart),
            "purchase" | "buy" => Ok(Behavior::Purchase),
            other => Err(format!("unknown behavior `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user_id: String,
    pub item_id: String,
    pub category_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub behavior: Behavior,
}

/// Header names of the five required columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnMap {
    pub user: String,
    pub item: String,
    pub category: String,
    pub behavior: String,
    pub timestamp: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            user: "user_id".into(),
            item: "item_id".into(),
            category: "category_id".into(),
            behavior: "behavior".into(),
            timestamp: "timestamp".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RejectedRow {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<InteractionRecord>,
    pub rejected: Vec<RejectedRow>,
}

/// Tab if the header line contains one, otherwise comma.
pub fn detect_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

pub fn parse_interactions(path: impl AsRef<Path>, schema: &ColumnMap) -> Result<ParsedLog, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    parse_interactions_from(BufReader::new(file), schema)
}

pub fn parse_interactions_from<R: Read>(reader: R, schema: &ColumnMap) -> Result<ParsedLog, DataError> {
    let mut reader = BufReader::new(reader);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(|e| DataError::Io(e.to_string()))?;
    let delimiter = detect_delimiter(&header);

    let mut csv = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let columns: Vec<String> = header.trim_end_matches(['\r', '\n']).split(delimiter as char).map(|c| c.trim().to_string()).collect();
    let find = |name: &str| {
        columns.iter().position(|c| c == name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let idx = [
        find(&schema.user)?,
        find(&schema.item)?,
        find(&schema.category)?,
        find(&schema.behavior)?,
        find(&schema.timestamp)?,
    ];

    let mut out = ParsedLog::default();
    for (row, result) in csv.records().enumerate() {
        // header is line 1
        let line = row as u64 + 2;
        let rec = match result {
            Ok(rec) => rec,
            Err(e) => {
                out.rejected.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let [u, it, c, b, t] = idx.map(field);
        let reason = if [u, it, c].iter().any(|s| s.is_empty()) {
            Some("empty id field".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            out.rejected.push(RejectedRow { line, reason });
            continue;
        }
        let timestamp = match t.parse::<u64>() {
            Ok(ts) => ts,
            Err(_) => {
                out.rejected.push(RejectedRow { line, reason: format!("unparsable timestamp `{t}`") });
                continue;
            }
        };
        let behavior = match b.parse::<Behavior>() {
            Ok(bh) => bh,
            Err(reason) => {
                out.rejected.push(RejectedRow { line, reason });
                continue;
            }
        };
        out.records.push(InteractionRecord {
            user_id: u.to_string(),
            item_id: it.to_string(),
            category_id: c.to_string(),
            timestamp,
            behavior,
        });
    }
    for r in &out.rejected {
        log::warn!("rejected line {}: {}", r.line, r.reason);
    }
    Ok(out)
}

/// Writes records with the default column names, comma-separated.
pub fn write_interactions<W: Write>(mut w: W, records: &[InteractionRecord]) -> std::io::Result<()> {
    writeln!(w, "user_id,item_id,category_id,behavior,timestamp")?;
    for r in records {
        writeln!(w, "{},{},{},{},{}", r.user_id, r.item_id, r.category_id, r.behavior, r.timestamp)?;
    }
    w.flush()
}
