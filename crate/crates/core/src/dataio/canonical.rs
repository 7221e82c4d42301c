//! Text forms: one session per line, a POI table, and the raw-id mapping.
//!
//! ```text
//! sessions.tsv  user<TAB>poi,poi,...<TAB>ts,ts,...<TAB>f,u,n,...
//! pois.tsv      poi_id<TAB>lat<TAB>lon<TAB>category
//! idmap.txt     user.0=470
//!               venue.0=49bbd6c0f964a520f4531fe3
//!               category.0=4bf58dd8d48988d127951735
//!               category_name.0=Arts & Crafts Store
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{Familiarity, Poi, TrajectorySession};
use crate::error::{Error, Result};

pub fn format_session(s: &TrajectorySession) -> String {
    let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(",");
    format!(
        "{}\t{}\t{}\t{}",
        s.user,
        join(&mut s.poi_seq.iter().map(|p| p.to_string())),
        join(&mut s.time_seq.iter().map(|t| t.to_string())),
        join(&mut s.familiarity_seq.iter().map(|f| f.code().to_string())),
    )
}

fn parse_list<T: FromStr>(field: &str, what: &str) -> std::result::Result<Vec<T>, String> {
    field
        .split(',')
        .map(|x| x.parse::<T>().map_err(|_| format!("bad {what} {x:?}")))
        .collect()
}

pub fn parse_session_line(line: &str) -> std::result::Result<TrajectorySession, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
    }
    let user = fields[0]
        .parse()
        .map_err(|_| format!("bad user id {:?}", fields[0]))?;
    let familiarity_seq = fields[3]
        .split(',')
        .map(|c| Familiarity::from_code(c).ok_or_else(|| format!("bad familiarity code {c:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let s = TrajectorySession {
        user,
        poi_seq: parse_list(fields[1], "poi id")?,
        time_seq: parse_list(fields[2], "timestamp")?,
        familiarity_seq,
    };
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn write_sessions(path: &Path, sessions: &[TrajectorySession]) -> Result<()> {
    let mut out = String::new();
    for s in sessions {
        out.push_str(&format_session(s));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_sessions(path: &Path) -> Result<Vec<TrajectorySession>> {
    let text = read_text(path)?;
    data_lines(&text)
        .map(|(line, l)| {
            parse_session_line(l).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            })
        })
        .collect()
}

pub fn write_pois(path: &Path, pois: &[Poi]) -> Result<()> {
    let mut out = String::new();
    for p in pois {
        writeln!(out, "{}\t{}\t{}\t{}", p.id, p.lat, p.lon, p.category).unwrap();
    }
    write_text(path, &out)
}

pub fn read_pois(path: &Path) -> Result<Vec<Poi>> {
    let text = read_text(path)?;
    let mut pois = Vec::new();
    for (line, l) in data_lines(&text) {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        let poi = Poi {
            id: f[0].parse().map_err(|_| err(format!("bad poi id {:?}", f[0])))?,
            lat: f[1].parse().map_err(|_| err(format!("bad latitude {:?}", f[1])))?,
            lon: f[2].parse().map_err(|_| err(format!("bad longitude {:?}", f[2])))?,
            category: f[3].parse().map_err(|_| err(format!("bad category {:?}", f[3])))?,
        };
        if poi.id != pois.len() {
            return Err(err(format!("poi ids must be contiguous, expected {} got {}", pois.len(), poi.id)));
        }
        poi.validate().map_err(|e| err(e.to_string()))?;
        pois.push(poi);
    }
    Ok(pois)
}

/// Raw string ids by dense integer id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    pub users: Vec<String>,
    pub venues: Vec<String>,
    pub categories: Vec<String>,
    pub category_names: Vec<String>,
}

impl IdMap {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (kind, list) in [
            ("user", &self.users),
            ("venue", &self.venues),
            ("category", &self.categories),
            ("category_name", &self.category_names),
        ] {
            for (i, raw) in list.iter().enumerate() {
                writeln!(out, "{kind}.{i}={raw}").unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut map = IdMap::default();
        for (line, l) in data_lines(text) {
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            let (key, raw) = l.split_once('=').ok_or_else(|| err("missing '='".into()))?;
            let (kind, id) = key.rsplit_once('.').ok_or_else(|| err(format!("bad key {key:?}")))?;
            let id: usize = id.parse().map_err(|_| err(format!("bad id in {key:?}")))?;
            let list = match kind {
                "user" => &mut map.users,
                "venue" => &mut map.venues,
                "category" => &mut map.categories,
                "category_name" => &mut map.category_names,
                _ => return Err(err(format!("unknown kind {kind:?}"))),
            };
            if id != list.len() {
                return Err(err(format!("{kind} ids must be contiguous, expected {} got {id}", list.len())));
            }
            list.push(raw.to_string());
        }
        Ok(map)
    }
}

/// A canonical dataset directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub sessions: Vec<TrajectorySession>,
    pub pois: Vec<Poi>,
    pub ids: IdMap,
}

impl Dataset {
    pub const SESSIONS_FILE: &'static str = "sessions.tsv";
    pub const POIS_FILE: &'static str = "pois.tsv";
    pub const IDMAP_FILE: &'static str = "idmap.txt";

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = [
            dir.join(Self::SESSIONS_FILE),
            dir.join(Self::POIS_FILE),
            dir.join(Self::IDMAP_FILE),
        ];
        write_sessions(&paths[0], &self.sessions)?;
        write_pois(&paths[1], &self.pois)?;
        write_text(&paths[2], &self.ids.to_text())?;
        Ok(paths.to_vec())
    }

    /// Loads a directory; the id map is optional.
    pub fn load(dir: &Path) -> Result<Self> {
        let sessions = read_sessions(&dir.join(Self::SESSIONS_FILE))?;
        let pois = read_pois(&dir.join(Self::POIS_FILE))?;
        let idmap = dir.join(Self::IDMAP_FILE);
        let ids = if idmap.exists() {
            IdMap::parse(&read_text(&idmap)?, &idmap)?
        } else {
            IdMap::default()
        };
        for s in &sessions {
            if let Some(&bad) = s.poi_seq.iter().find(|&&p| p >= pois.len()) {
                return Err(Error::OutOfRange {
                    what: "poi table",
                    index: bad,
                    size: pois.len(),
                });
            }
        }
        Ok(Dataset { sessions, pois, ids })
    }
}
