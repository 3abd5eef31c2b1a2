use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use actshape::{Cascade, Event, EventLog, ExogenousIntensity, HawkesNetwork};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const EVENTS_HEADER: [&str; 5] = ["cascade_id", "user_id", "time", "generation", "parent_idx"];
pub const VECTOR_HEADER: [&str; 2] = ["user_id", "value"];

/// Fixed 17-significant-digit form; parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn parse_err(path: &Path, line: Option<u64>, e: impl std::fmt::Display) -> CliError {
    match line {
        Some(l) => CliError::usage(format!("{}:{l}: {e}", path.display())),
        None => CliError::usage(format!("{}: {e}", path.display())),
    }
}

/// On-disk model: `A` as `[row, col, value]` triplets sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub m: usize,
    pub omega: f64,
    pub lambda0: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<(usize, usize, f64)>,
}

impl ModelFile {
    pub fn from_parts(net: &HawkesNetwork, lambda0: &[f64]) -> Self {
        Self {
            m: net.users(),
            omega: net.omega(),
            lambda0: lambda0.to_vec(),
            a: net.influence().triplets().collect(),
        }
    }

    pub fn into_parts(self) -> std::result::Result<(HawkesNetwork, ExogenousIntensity), String> {
        let net = HawkesNetwork::new(self.m, &self.a, self.omega).map_err(|e| e.to_string())?;
        let lambda0 = ExogenousIntensity::new(self.lambda0).map_err(|e| e.to_string())?;
        lambda0.check_users(self.m).map_err(|e| e.to_string())?;
        Ok((net, lambda0))
    }
}

pub fn read_model(path: &Path) -> Result<(HawkesNetwork, ExogenousIntensity)> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| parse_err(path, None, e))?;
    file.into_parts().map_err(|e| parse_err(path, None, e))
}

pub fn write_model(path: &Path, net: &HawkesNetwork, lambda0: &[f64]) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(&ModelFile::from_parts(net, lambda0)).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

/// Writes a header and rows of already formatted fields.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<String>>())
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let line = rec.position().map(|p| p.line());
    let raw = rec
        .get(i)
        .ok_or_else(|| parse_err(path, line, format!("missing {name}")))?;
    raw.parse()
        .map_err(|e| parse_err(path, line, format!("{name} {raw:?}: {e}")))
}

fn optional_field<T: std::str::FromStr>(
    path: &Path,
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match rec.get(i) {
        None | Some("") => Ok(None),
        Some(_) => field(path, rec, i, name).map(Some),
    }
}

fn check_header(
    path: &Path,
    reader: &mut csv::Reader<File>,
    required: &[&str],
    optional: &[&str],
) -> Result<()> {
    let header = reader.headers().map_err(|e| parse_err(path, Some(1), e))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let allowed = required.len()..=required.len() + optional.len();
    let expected: Vec<&str> = required.iter().chain(optional).copied().collect();
    if !allowed.contains(&names.len()) || names[..] != expected[..names.len()] {
        return Err(parse_err(
            path,
            Some(1),
            format!("header must be {}", expected.join(",")),
        ));
    }
    Ok(())
}

/// Raw rows of an events file grouped by cascade id.
pub struct EventsFile {
    pub cascades: BTreeMap<usize, Vec<Event>>,
    pub max_user: Option<usize>,
}

pub fn read_events(path: &Path) -> Result<EventsFile> {
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &EVENTS_HEADER[..3], &EVENTS_HEADER[3..])?;
    let mut cascades: BTreeMap<usize, Vec<Event>> = BTreeMap::new();
    let mut max_user = None;
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map(|p| p.line()), e))?;
        let cascade: usize = field(path, &rec, 0, "cascade_id")?;
        let user: usize = field(path, &rec, 1, "user_id")?;
        let time: f64 = field(path, &rec, 2, "time")?;
        let generation = optional_field(path, &rec, 3, "generation")?;
        let parent = optional_field(path, &rec, 4, "parent_idx")?;
        max_user = max_user.max(Some(user));
        cascades.entry(cascade).or_default().push(Event {
            user,
            time,
            generation,
            parent,
        });
    }
    Ok(EventsFile { cascades, max_user })
}

impl EventsFile {
    /// Cascades `0..n` on `[0, horizon]`, where ids absent from the file are
    /// empty cascades and `n` is at least `min_cascades`.
    pub fn into_log(self, path: &Path, horizon: f64, users: usize, min_cascades: usize) -> Result<EventLog> {
        let n = self
            .cascades
            .keys()
            .next_back()
            .map_or(0, |k| k + 1)
            .max(min_cascades);
        let mut by_id = self.cascades;
        let mut cascades = Vec::with_capacity(n);
        for id in 0..n {
            let events = by_id.remove(&id).unwrap_or_default();
            let c = Cascade::new(horizon, events, users)
                .map_err(|e| parse_err(path, None, format!("cascade {id}: {e}")))?;
            cascades.push(c);
        }
        Ok(EventLog::new(cascades))
    }
}

pub fn write_events(path: &Path, log: &EventLog) -> Result<()> {
    let rows = log.cascades.iter().enumerate().flat_map(|(id, c)| {
        c.events().iter().map(move |e| {
            vec![
                id.to_string(),
                e.user.to_string(),
                num(e.time),
                e.generation.map_or(String::new(), |g| g.to_string()),
                e.parent.map_or(String::new(), |p| p.to_string()),
            ]
        })
    });
    write_csv(path, &EVENTS_HEADER, rows)
}

/// Per-user values; every user in `0..m` must appear exactly once.
pub fn read_vector(path: &Path, m: usize) -> Result<Vec<f64>> {
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &VECTOR_HEADER, &[])?;
    let mut values = vec![None; m];
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map(|p| p.line()), e))?;
        let line = rec.position().map(|p| p.line());
        let user: usize = field(path, &rec, 0, "user_id")?;
        let value: f64 = field(path, &rec, 1, "value")?;
        let slot = values
            .get_mut(user)
            .ok_or_else(|| parse_err(path, line, format!("user {user} out of range for {m} users")))?;
        if slot.replace(value).is_some() {
            return Err(parse_err(path, line, format!("user {user} listed twice")));
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(u, v)| v.ok_or_else(|| parse_err(path, None, format!("no value for user {u}"))))
        .collect()
}

#[cfg(test)]
pub fn write_vector(path: &Path, values: &[f64]) -> Result<()> {
    let rows = values
        .iter()
        .enumerate()
        .map(|(u, v)| vec![u.to_string(), num(*v)]);
    write_csv(path, &VECTOR_HEADER, rows)
}

/// `row,col` pairs.
pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &["row", "col"], &[])?;
    let mut edges = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map(|p| p.line()), e))?;
        edges.push((field(path, &rec, 0, "row")?, field(path, &rec, 1, "col")?));
    }
    Ok(edges)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn output_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(dir.to_path_buf())
}

pub fn print_lines(lines: &[String]) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn network() -> impl Strategy<Value = (HawkesNetwork, Vec<f64>)> {
        (1usize..6).prop_flat_map(|m| {
            (
                Just(m),
                prop::collection::btree_map((0..m, 0..m), 0.0f64..10.0, 0..=m * m),
                prop::collection::vec(0.0f64..5.0, m),
                1e-3f64..100.0,
            )
                .prop_map(|(m, a, lambda0, omega)| {
                    let entries: Vec<(usize, usize, f64)> =
                        a.into_iter().map(|((r, c), v)| (r, c, v)).collect();
                    (HawkesNetwork::new(m, &entries, omega).unwrap(), lambda0)
                })
        })
    }

    fn event_log() -> impl Strategy<Value = (EventLog, usize, f64)> {
        let cascade = prop::collection::vec((0usize..4, 0.0f64..10.0, any::<bool>()), 0..20);
        prop::collection::vec(cascade, 1..4).prop_map(|raw| {
            let cascades = raw
                .into_iter()
                .map(|mut rows| {
                    rows.sort_by(|a, b| a.1.total_cmp(&b.1));
                    let mut events: Vec<Event> = Vec::with_capacity(rows.len());
                    for (i, (user, time, child)) in rows.into_iter().enumerate() {
                        let e = match events.last() {
                            Some(prev) if child && prev.generation.is_some() => Event {
                                user,
                                time,
                                generation: prev.generation.map(|g| g + 1),
                                parent: Some(i - 1),
                            },
                            _ => Event {
                                user,
                                time,
                                generation: Some(0),
                                parent: None,
                            },
                        };
                        events.push(e);
                    }
                    Cascade::new(10.0, events, 4).unwrap()
                })
                .collect();
            (EventLog::new(cascades), 4, 10.0)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn model_round_trip((net, lambda0) in network()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.json");
            write_model(&path, &net, &lambda0).unwrap();
            let (back, back_l) = read_model(&path).unwrap();
            prop_assert_eq!(back.influence(), net.influence());
            prop_assert_eq!(back.omega(), net.omega());
            prop_assert_eq!(back_l.as_slice(), &lambda0[..]);
        }

        #[test]
        fn events_round_trip((log, users, horizon) in event_log()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("events.csv");
            write_events(&path, &log).unwrap();
            let back = read_events(&path).unwrap().into_log(&path, horizon, users, log.cascades.len()).unwrap();
            prop_assert_eq!(back, log);
        }

        #[test]
        fn vector_round_trip(values in prop::collection::vec(-1e300f64..1e300, 1..10)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("v.csv");
            write_vector(&path, &values).unwrap();
            prop_assert_eq!(read_vector(&path, values.len()).unwrap(), values);
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        fs::write(&path, "cascade_id,user_id,time\n0,1,0.5\n0,x,0.7\n").unwrap();
        let msg = read_events(&path).err().unwrap().to_string();
        assert!(msg.contains("events.csv:3") && msg.contains("user_id"), "{msg}");

        fs::write(&path, "cascade,user_id,time\n").unwrap();
        assert!(read_events(&path).err().unwrap().to_string().contains(":1:"));
    }

    #[test]
    fn duplicate_influence_entries_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        fs::write(
            &path,
            r#"{"m": 2, "omega": 1.0, "lambda0": [1, 1], "A": [[0, 1, 0.5], [0, 1, 0.2]]}"#,
        )
        .unwrap();
        assert!(matches!(read_model(&path), Err(CliError::Usage(_))));
    }

    #[test]
    fn vector_must_cover_every_user() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        fs::write(&path, "user_id,value\n0,1.0\n0,2.0\n").unwrap();
        assert!(read_vector(&path, 2).err().unwrap().to_string().contains("twice"));
        fs::write(&path, "user_id,value\n1,1.0\n").unwrap();
        assert!(read_vector(&path, 2)
            .err()
            .unwrap()
            .to_string()
            .contains("user 0"));
    }
}
