//! Delimited check-in files, catalog files and persisted splits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use stacp_core::{Catalog, CheckIn, DatasetSplit};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Column {
    User,
    Poi,
    Time,
    Lat,
    Lon,
    /// Present in the file but ignored.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeFormat {
    /// Integer seconds since the epoch.
    Epoch,
    /// `YYYY-MM-DDTHH:MM:SSZ`.
    Iso8601,
}

/// Column layout of a check-in file. Reading accepts either time format
/// regardless of `time_format`, which only controls writing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFormat {
    pub delimiter: char,
    pub columns: Vec<Column>,
    pub time_format: TimeFormat,
    #[serde(default)]
    pub has_header: bool,
}

impl DatasetFormat {
    /// Built-in layouts: `gowalla` (SNAP dump order: user, time, lat, lon,
    /// poi), `foursquare` (user, poi, time, lat, lon; tab separated) and
    /// `custom` (the same order, comma separated).
    pub fn profile(name: &str) -> Option<DatasetFormat> {
        use Column::*;
        match name {
            "gowalla" => Some(DatasetFormat {
                delimiter: '\t',
                columns: vec![User, Time, Lat, Lon, Poi],
                time_format: TimeFormat::Iso8601,
                has_header: false,
            }),
            "foursquare" => Some(DatasetFormat {
                delimiter: '\t',
                columns: vec![User, Poi, Time, Lat, Lon],
                time_format: TimeFormat::Epoch,
                has_header: false,
            }),
            "custom" => Some(DatasetFormat {
                delimiter: ',',
                columns: vec![User, Poi, Time, Lat, Lon],
                time_format: TimeFormat::Epoch,
                has_header: false,
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for col in [Column::User, Column::Poi, Column::Time, Column::Lat, Column::Lon] {
            let n = self.columns.iter().filter(|&&c| c == col).count();
            if n != 1 {
                return Err(Error::Config(format!("column layout must name {col:?} exactly once, found {n}")));
            }
        }
        if self.delimiter == '\n' || self.delimiter == '\r' {
            return Err(Error::Config("delimiter cannot be a line break".into()));
        }
        Ok(())
    }

    fn position(&self, col: Column) -> usize {
        self.columns.iter().position(|&c| c == col).expect("validated layout")
    }

    pub fn extension(&self) -> &'static str {
        if self.delimiter == '\t' {
            "tsv"
        } else {
            "csv"
        }
    }

    /// Parses one data line.
    pub fn parse_line(&self, line: &str) -> std::result::Result<CheckIn, String> {
        let fields: Vec<&str> = line.split(self.delimiter).map(str::trim).collect();
        if fields.len() != self.columns.len() {
            return Err(format!("expected {} fields, found {}", self.columns.len(), fields.len()));
        }
        let get = |c| fields[self.position(c)];
        let user = get(Column::User);
        let poi = get(Column::Poi);
        if user.is_empty() || poi.is_empty() {
            return Err("empty user or POI id".into());
        }
        let timestamp = parse_timestamp(get(Column::Time))?;
        let lat: f64 = get(Column::Lat).parse().map_err(|_| format!("bad latitude {:?}", get(Column::Lat)))?;
        let lon: f64 = get(Column::Lon).parse().map_err(|_| format!("bad longitude {:?}", get(Column::Lon)))?;
        CheckIn::new(user, poi, timestamp, lat, lon).map_err(|e| e.to_string())
    }

    pub fn format_line(&self, c: &CheckIn) -> String {
        let mut out = String::new();
        for (i, col) in self.columns.iter().enumerate() {
            if i > 0 {
                out.push(self.delimiter);
            }
            match col {
                Column::User => out.push_str(&c.user_id),
                Column::Poi => out.push_str(&c.poi_id),
                Column::Time => out.push_str(&format_timestamp(c.timestamp, self.time_format)),
                Column::Lat => out.push_str(&c.lat.to_string()),
                Column::Lon => out.push_str(&c.lon.to_string()),
                Column::Skip => {}
            }
        }
        out
    }
}

/// Epoch seconds, RFC 3339, `YYYY-MM-DD HH:MM:SS`, or the Foursquare dump
/// form `Tue Apr 03 18:00:09 +0000 2012`. Offsets are discarded: the clock
/// time as recorded is read as UTC.
pub fn parse_timestamp(s: &str) -> std::result::Result<i64, String> {
    if let Ok(secs) = s.parse::<i64>() {
        return Ok(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_local().and_utc().timestamp());
    }
    if let Ok(dt) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
        return Ok(dt.naive_local().and_utc().timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    Err(format!("unrecognized timestamp {s:?}"))
}

pub fn format_timestamp(ts: i64, format: TimeFormat) -> String {
    match format {
        TimeFormat::Epoch => ts.to_string(),
        TimeFormat::Iso8601 => match DateTime::from_timestamp(ts, 0) {
            Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            None => ts.to_string(),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseReport {
    pub checkins: Vec<CheckIn>,
    pub rejected: Vec<RejectedRow>,
}

/// Reads every well-formed row; malformed and out-of-range rows are
/// collected in `rejected`. Blank lines and `#` comments are skipped.
pub fn read_checkins(reader: impl BufRead, format: &DatasetFormat) -> std::io::Result<ParseReport> {
    let mut checkins = Vec::new();
    let mut rejected = Vec::new();
    let mut header_pending = format.has_header;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        match format.parse_line(trimmed) {
            Ok(c) => checkins.push(c),
            Err(reason) => rejected.push(RejectedRow { line: i + 1, reason }),
        }
    }
    Ok(ParseReport { checkins, rejected })
}

pub fn parse_checkins(path: &Path, format: &DatasetFormat) -> Result<ParseReport> {
    format.validate()?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let report = read_checkins(BufReader::new(file), format).map_err(|e| Error::io(path, e))?;
    if report.checkins.is_empty() {
        return Err(Error::Data(format!(
            "{}: no valid check-ins ({} rows rejected)",
            path.display(),
            report.rejected.len()
        )));
    }
    Ok(report)
}

pub fn write_checkins_to(mut w: impl Write, checkins: &[CheckIn], format: &DatasetFormat) -> std::io::Result<()> {
    if format.has_header {
        let names: Vec<&str> = format
            .columns
            .iter()
            .map(|c| match c {
                Column::User => "user_id",
                Column::Poi => "poi_id",
                Column::Time => "timestamp",
                Column::Lat => "lat",
                Column::Lon => "lon",
                Column::Skip => "",
            })
            .collect();
        writeln!(w, "{}", names.join(&format.delimiter.to_string()))?;
    }
    for c in checkins {
        writeln!(w, "{}", format.format_line(c))?;
    }
    w.flush()
}

pub fn write_checkins(path: &Path, checkins: &[CheckIn], format: &DatasetFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkins_to(BufWriter::new(file), checkins, format).map_err(|e| Error::io(path, e))
}

/// Writes `kind<TAB>index<TAB>id` lines for the user and POI catalogs.
pub fn write_catalogs(path: &Path, users: &Catalog, pois: &Catalog) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (kind, cat) in [("user", users), ("poi", pois)] {
            for (i, id) in cat.ids().iter().enumerate() {
                writeln!(w, "{kind}\t{i}\t{id}")?;
            }
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_catalogs(path: &Path) -> Result<(Catalog, Catalog)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut users = Catalog::new();
    let mut pois = Catalog::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Data(format!("{}:{}: malformed catalog line", path.display(), n + 1));
        let mut parts = line.splitn(3, '\t');
        let (kind, idx, id) = (parts.next().ok_or_else(bad)?, parts.next().ok_or_else(bad)?, parts.next().ok_or_else(bad)?);
        let idx: usize = idx.parse().map_err(|_| bad())?;
        let cat = match kind {
            "user" => &mut users,
            "poi" => &mut pois,
            _ => return Err(bad()),
        };
        if cat.insert(id) != idx {
            return Err(Error::Data(format!("{}:{}: catalog indices out of order", path.display(), n + 1)));
        }
    }
    Ok((users, pois))
}

/// Writes `train`, `validation` and `test` files in `format` plus `catalog.tsv`.
pub fn write_split(dir: &Path, split: &DatasetSplit, format: &DatasetFormat) -> Result<Vec<PathBuf>> {
    let ext = format.extension();
    let mut written = Vec::new();
    for (name, part) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        let p = dir.join(format!("{name}.{ext}"));
        write_checkins(&p, part, format)?;
        written.push(p);
    }
    let cat = dir.join("catalog.tsv");
    write_catalogs(&cat, &split.users, &split.pois)?;
    written.push(cat);
    Ok(written)
}
