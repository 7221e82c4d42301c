use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::DateTime;

use super::canonical::IdMap;
use super::{CheckIn, Poi};
use crate::error::{Error, Result};

const TIME_FORMAT: &str = "%a %b %d %H:%M:%S %z %Y";

#[derive(Clone, Debug, PartialEq)]
pub struct SkippedLine {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ParsedCheckins {
    /// In file order.
    pub checkins: Vec<CheckIn>,
    pub pois: Vec<Poi>,
    pub ids: IdMap,
    /// Non-blank lines read.
    pub total_lines: usize,
    pub skipped: Vec<SkippedLine>,
}

pub fn parse_foursquare(path: &Path) -> Result<ParsedCheckins> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_foursquare_reader(BufReader::new(f), path)
}

struct Record<'a> {
    user: &'a str,
    venue: &'a str,
    category: &'a str,
    category_name: &'a str,
    lat: f64,
    lon: f64,
    timestamp: i64,
}

fn parse_record(line: &str) -> std::result::Result<Record<'_>, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 8 {
        return Err(format!("expected 8 tab-separated fields, found {}", fields.len()));
    }
    let lat: f64 = fields[4]
        .trim()
        .parse()
        .map_err(|_| format!("bad latitude {:?}", fields[4]))?;
    let lon: f64 = fields[5]
        .trim()
        .parse()
        .map_err(|_| format!("bad longitude {:?}", fields[5]))?;
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(format!("coordinates out of range ({lat}, {lon})"));
    }
    let ts = DateTime::parse_from_str(fields[7].trim(), TIME_FORMAT)
        .map_err(|e| format!("bad time {:?}: {e}", fields[7]))?;
    if fields[0].is_empty() || fields[1].is_empty() {
        return Err("empty user or venue id".into());
    }
    Ok(Record {
        user: fields[0],
        venue: fields[1],
        category: fields[2],
        category_name: fields[3],
        lat,
        lon,
        timestamp: ts.timestamp(),
    })
}

/// Parses the 8-column check-in TSV. Bad lines are skipped and reported; the
/// whole parse fails when more than 1% of non-blank lines are bad.
pub fn parse_foursquare_reader(mut reader: impl BufRead, path: &Path) -> Result<ParsedCheckins> {
    let mut out = ParsedCheckins::default();
    let mut users: HashMap<String, u32> = HashMap::new();
    let mut venues: HashMap<String, usize> = HashMap::new();
    let mut categories: HashMap<String, u32> = HashMap::new();

    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))? == 0 {
            break;
        }
        line_no += 1;
        // the public dump is not uniformly utf-8
        let text = String::from_utf8_lossy(&buf);
        let line = text.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        out.total_lines += 1;
        let rec = match parse_record(line) {
            Ok(r) => r,
            Err(message) => {
                out.skipped.push(SkippedLine {
                    line: line_no,
                    message,
                });
                continue;
            }
        };
        let user = *users.entry(rec.user.to_string()).or_insert_with(|| {
            out.ids.users.push(rec.user.to_string());
            (out.ids.users.len() - 1) as u32
        });
        let category = *categories.entry(rec.category.to_string()).or_insert_with(|| {
            out.ids.categories.push(rec.category.to_string());
            out.ids.category_names.push(rec.category_name.to_string());
            (out.ids.categories.len() - 1) as u32
        });
        let poi = *venues.entry(rec.venue.to_string()).or_insert_with(|| {
            let id = out.pois.len();
            out.ids.venues.push(rec.venue.to_string());
            out.pois.push(Poi {
                id,
                lon: rec.lon,
                lat: rec.lat,
                category,
            });
            id
        });
        out.checkins.push(CheckIn {
            user,
            poi,
            timestamp: rec.timestamp,
        });
    }
    if out.skipped.len() * 100 > out.total_lines {
        return Err(Error::TooManyMalformed {
            path: path.to_path_buf(),
            skipped: out.skipped.len(),
            total: out.total_lines,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn line(user: &str, venue: &str, lat: &str) -> String {
        format!("{user}\t{venue}\t4bf58dd8\tBar\t{lat}\t-73.98\t-240\tTue Apr 03 18:00:09 +0000 2012\n")
    }

    fn parse(text: &str) -> Result<ParsedCheckins> {
        parse_foursquare_reader(Cursor::new(text.as_bytes().to_vec()), Path::new("fixture.tsv"))
    }

    #[test]
    fn three_lines_two_venues() {
        let text = line("470", "49bbd6", "40.71") + &line("979", "4a43c0", "40.72") + &line("470", "49bbd6", "40.71");
        let p = parse(&text).unwrap();
        assert_eq!(p.checkins.len(), 3);
        assert_eq!(p.pois.len(), 2);
        assert_eq!(p.checkins.iter().map(|c| c.poi).collect::<Vec<_>>(), vec![0, 1, 0]);
        assert_eq!(p.checkins[0].timestamp, 1333476009);
        assert_eq!(p.ids.users, vec!["470", "979"]);
    }

    #[test]
    fn empty_file() {
        let p = parse("").unwrap();
        assert!(p.checkins.is_empty() && p.pois.is_empty());
    }

    #[test]
    fn bad_latitude_is_skipped_and_counted() {
        let mut text = String::new();
        for i in 0..150 {
            text += &line(&format!("u{}", i % 7), &format!("v{}", i % 11), "40.7");
        }
        text += &line("u1", "v1", "abc");
        let p = parse(&text).unwrap();
        assert_eq!(p.skipped.len(), 1);
        assert_eq!(p.skipped[0].line, 151);
        assert_eq!(p.checkins.len(), 150);
    }

    #[test]
    fn aborts_above_one_percent() {
        let text = line("u", "v", "40.7") + &line("u", "v", "abc");
        match parse(&text) {
            Err(Error::TooManyMalformed { skipped: 1, total: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn offset_is_ignored_and_latin1_tolerated() {
        let mut bytes = b"u\tv\tc\tCaf".to_vec();
        bytes.push(0xe9);
        bytes.extend_from_slice(b"\t40.7\t-73.9\t120\tSat Apr 07 00:00:00 +0900 2012\r\n");
        let p = parse_foursquare_reader(Cursor::new(bytes), Path::new("x")).unwrap();
        // +0900 wall clock converted to UTC
        assert_eq!(p.checkins[0].timestamp, 1333724400);
        assert_eq!(p.ids.category_names[0], "Caf\u{fffd}");
    }
}
