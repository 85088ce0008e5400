use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One logged interaction. Every record counts as positive implicit feedback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInteraction {
    pub user_id: String,
    pub item_id: String,
    /// Seconds since the epoch, never negative.
    pub timestamp: i64,
}

impl RawInteraction {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, timestamp: i64) -> Self {
        Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawFormat {
    /// `user::item::rating::timestamp`, as in the MovieLens-1M ratings file.
    MovielensDat,
    /// `user,item,rating,timestamp`, the Amazon ratings-only CSV dumps.
    AmazonCsv,
    /// One JSON object per line with `username`/`user_id`, `product_id`
    /// and either `date` (`YYYY-MM-DD`) or `timestamp`.
    SteamJson,
}

impl FromStr for RawFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens_dat" => Ok(RawFormat::MovielensDat),
            "amazon_csv" => Ok(RawFormat::AmazonCsv),
            "steam_json" => Ok(RawFormat::SteamJson),
            other => Err(Error::Config(format!("unknown raw format `{other}`"))),
        }
    }
}

pub fn load_raw(path: impl AsRef<Path>, format: RawFormat) -> Result<Vec<RawInteraction>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_raw(BufReader::new(file), format)
}

/// Parses every record of `reader`; no filtering happens here.
pub fn parse_raw<R: BufRead>(reader: R, format: RawFormat) -> Result<Vec<RawInteraction>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let record = match format {
            RawFormat::MovielensDat => parse_movielens(line),
            RawFormat::AmazonCsv => {
                if lineno == 1 && is_csv_header(line) {
                    continue;
                }
                parse_amazon(line)
            }
            RawFormat::SteamJson => parse_steam(line),
        };
        out.push(record.map_err(|message| Error::Parse {
            line: lineno,
            message,
        })?);
    }
    Ok(out)
}

fn parse_timestamp(field: &str) -> std::result::Result<i64, String> {
    let field = field.trim();
    let ts = match field.parse::<i64>() {
        Ok(ts) => ts,
        // some dumps write unix times as floats
        Err(_) => {
            let f = field
                .parse::<f64>()
                .map_err(|_| format!("bad timestamp `{field}`"))?;
            if !f.is_finite() {
                return Err(format!("non-finite timestamp `{field}`"));
            }
            f as i64
        }
    };
    if ts < 0 {
        return Err(format!("negative timestamp {ts}"));
    }
    Ok(ts)
}

fn non_empty(field: &str, what: &str) -> std::result::Result<String, String> {
    let f = field.trim();
    if f.is_empty() {
        Err(format!("empty {what}"))
    } else {
        Ok(f.to_string())
    }
}

fn parse_movielens(line: &str) -> std::result::Result<RawInteraction, String> {
    let fields: Vec<&str> = line.split("::").collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 `::`-separated fields, found {}", fields.len()));
    }
    Ok(RawInteraction {
        user_id: non_empty(fields[0], "user id")?,
        item_id: non_empty(fields[1], "item id")?,
        timestamp: parse_timestamp(fields[3])?,
    })
}

fn is_csv_header(line: &str) -> bool {
    let first = line.split(',').next().unwrap_or("").trim().to_ascii_lowercase();
    first == "user" || first == "user_id" || first == "userid" || first == "reviewerid"
}

fn parse_amazon(line: &str) -> std::result::Result<RawInteraction, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(line.as_bytes());
    let record = rdr
        .records()
        .next()
        .ok_or_else(|| "empty record".to_string())?
        .map_err(|e| e.to_string())?;
    if record.len() != 4 {
        return Err(format!("expected 4 comma-separated fields, found {}", record.len()));
    }
    Ok(RawInteraction {
        user_id: non_empty(&record[0], "user id")?,
        item_id: non_empty(&record[1], "item id")?,
        timestamp: parse_timestamp(&record[3])?,
    })
}

fn json_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) if !s.is_empty() => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_steam(line: &str) -> std::result::Result<RawInteraction, String> {
    let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let user = ["username", "user_id"]
        .iter()
        .find_map(|k| v.get(*k).and_then(json_string))
        .ok_or("missing `username`/`user_id`")?;
    let item = v
        .get("product_id")
        .and_then(json_string)
        .ok_or("missing `product_id`")?;
    let timestamp = if let Some(ts) = v.get("timestamp") {
        match ts {
            serde_json::Value::Number(n) => parse_timestamp(&n.to_string())?,
            serde_json::Value::String(s) => parse_timestamp(s)?,
            _ => return Err("bad `timestamp`".into()),
        }
    } else if let Some(date) = v.get("date").and_then(|d| d.as_str()) {
        let day = chrono::NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|e| format!("bad date `{date}`: {e}"))?;
        let ts = day
            .and_hms_opt(0, 0, 0)
            .expect("midnight is valid")
            .and_utc()
            .timestamp();
        if ts < 0 {
            return Err(format!("date before 1970: `{date}`"));
        }
        ts
    } else {
        return Err("missing `date`/`timestamp`".into());
    };
    Ok(RawInteraction {
        user_id: user,
        item_id: item,
        timestamp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, f: RawFormat) -> Result<Vec<RawInteraction>> {
        parse_raw(s.as_bytes(), f)
    }

    #[test]
    fn movielens_line() {
        let out = parse("1::1193::5::978300760\n", RawFormat::MovielensDat).unwrap();
        assert_eq!(out, vec![RawInteraction::new("1", "1193", 978300760)]);
    }

    #[test]
    fn empty_and_single() {
        assert!(parse("", RawFormat::MovielensDat).unwrap().is_empty());
        assert_eq!(parse("a,b,5.0,12\n", RawFormat::AmazonCsv).unwrap().len(), 1);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = parse("1::2::3::4\n1::2::3\n", RawFormat::MovielensDat).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("1::2::3::-5\n", RawFormat::MovielensDat).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn unknown_format_is_config_error() {
        assert!(matches!("parquet".parse::<RawFormat>(), Err(Error::Config(_))));
        assert_eq!("steam_json".parse::<RawFormat>().unwrap(), RawFormat::SteamJson);
    }

    #[test]
    fn amazon_header_and_quotes() {
        let s = "user,item,rating,timestamp\n\"A1, x\",B0001,4.0,1360000000\n";
        let out = parse(s, RawFormat::AmazonCsv).unwrap();
        assert_eq!(out, vec![RawInteraction::new("A1, x", "B0001", 1360000000)]);
    }

    #[test]
    fn steam_lines() {
        let s = r#"{"username": "bob", "product_id": "725280", "date": "1970-01-02"}
{"user_id": 7, "product_id": "1", "timestamp": 99}
"#;
        let out = parse(s, RawFormat::SteamJson).unwrap();
        assert_eq!(out[0], RawInteraction::new("bob", "725280", 86400));
        assert_eq!(out[1], RawInteraction::new("7", "1", 99));
        assert!(parse("{\"username\": \"x\"}\n", RawFormat::SteamJson).is_err());
    }
}
