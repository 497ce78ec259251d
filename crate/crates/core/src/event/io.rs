//! CSV and fixed-stride binary event files.
//!
//! CSV: header `t_us,x,y,p[,label]`, polarity as -1/1, label 0/1/-1.
//!
//! Binary: 8-byte magic `EVST0001`, then little-endian 16-byte records:
//! `t: i64, x: u16, y: u16, p: i8, label: i8 (-1 unknown), 2 bytes padding`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Event, EventStream, Label, Polarity, SensorGeometry};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 8] = b"EVST0001";
pub const RECORD_SIZE: usize = 16;
const CSV_HEADER: [&str; 5] = ["t_us", "x", "y", "p", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Binary,
}

impl EventFormat {
    /// Guesses the format from a file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::Binary,
        }
    }
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EventFormat::Csv),
            "bin" | "binary" => Ok(EventFormat::Binary),
            other => Err(Error::invalid(format!("unknown event format `{other}`"))),
        }
    }
}

pub fn read_events(path: &Path, format: EventFormat, geometry: SensorGeometry) -> Result<EventStream> {
    let events = match format {
        EventFormat::Csv => read_csv(File::open(path)?)?,
        EventFormat::Binary => {
            let mut bytes = Vec::new();
            File::open(path)?.read_to_end(&mut bytes)?;
            decode_binary(&bytes)?
        }
    };
    EventStream::new(events, geometry)
}

pub fn write_events(stream: &EventStream, path: &Path, format: EventFormat) -> Result<()> {
    let file = File::create(path)?;
    match format {
        EventFormat::Csv => write_csv(stream.events(), file),
        EventFormat::Binary => {
            let mut w = BufWriter::new(file);
            w.write_all(&encode_binary(stream.events()))?;
            w.flush()?;
            Ok(())
        }
    }
}

pub(crate) fn read_csv<R: Read>(reader: R) -> Result<Vec<Event>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut events = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if i == 0 && record.get(0) == Some(CSV_HEADER[0]) {
            continue;
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        events.push(parse_record(&record, line)?);
    }
    Ok(events)
}

fn parse_record(record: &csv::StringRecord, line: u64) -> Result<Event> {
    let malformed = |message: String| Error::Malformed { location: format!("line {line}"), message };
    if record.len() != 4 && record.len() != 5 {
        return Err(malformed(format!("expected 4 or 5 fields, found {}", record.len())));
    }
    fn field<T: FromStr>(record: &csv::StringRecord, idx: usize, name: &str) -> std::result::Result<T, String> {
        let raw = &record[idx];
        raw.parse::<T>().map_err(|_| format!("invalid {name} `{raw}`"))
    }
    let t: i64 = field(record, 0, "timestamp").map_err(malformed)?;
    if t < 0 {
        return Err(malformed(format!("negative timestamp {t}")));
    }
    let x: u16 = field(record, 1, "x").map_err(malformed)?;
    let y: u16 = field(record, 2, "y").map_err(malformed)?;
    let p: i8 = field(record, 3, "polarity").map_err(malformed)?;
    let p = Polarity::from_i8(p).ok_or_else(|| malformed(format!("polarity must be -1 or 1, got {p}")))?;
    let label = match record.get(4) {
        None | Some("") => Label::Unknown,
        Some(_) => {
            let v: i8 = field(record, 4, "label").map_err(malformed)?;
            Label::from_i8(v).ok_or_else(|| malformed(format!("label must be 0, 1 or -1, got {v}")))?
        }
    };
    Ok(Event { t, x, y, p, label })
}

pub(crate) fn write_csv<W: Write>(events: &[Event], writer: W) -> Result<()> {
    let with_label = events.iter().any(|e| e.label.is_known());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    if with_label {
        w.write_record(CSV_HEADER)?;
    } else {
        w.write_record(&CSV_HEADER[..4])?;
    }
    for e in events {
        let t = e.t.to_string();
        let x = e.x.to_string();
        let y = e.y.to_string();
        let p = e.p.as_i8().to_string();
        if with_label {
            w.write_record([&t, &x, &y, &p, &e.label.as_i8().to_string()])?;
        } else {
            w.write_record([&t, &x, &y, &p])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn encode_binary(events: &[Event]) -> Vec<u8> {
    let mut out = Vec::with_capacity(BINARY_MAGIC.len() + events.len() * RECORD_SIZE);
    out.extend_from_slice(BINARY_MAGIC);
    for e in events {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p.as_i8() as u8);
        out.push(e.label.as_i8() as u8);
        out.extend_from_slice(&[0, 0]);
    }
    out
}

pub(crate) fn decode_binary(bytes: &[u8]) -> Result<Vec<Event>> {
    if bytes.len() < BINARY_MAGIC.len() || &bytes[..8] != BINARY_MAGIC {
        return Err(Error::Malformed { location: "offset 0".into(), message: "missing EVST0001 magic".into() });
    }
    let body = &bytes[8..];
    if !body.len().is_multiple_of(RECORD_SIZE) {
        let offset = 8 + body.len() / RECORD_SIZE * RECORD_SIZE;
        return Err(Error::Malformed {
            location: format!("offset {offset}"),
            message: format!("truncated record ({} trailing bytes)", body.len() % RECORD_SIZE),
        });
    }
    body.chunks_exact(RECORD_SIZE)
        .enumerate()
        .map(|(i, rec)| {
            let offset = 8 + i * RECORD_SIZE;
            let malformed = |message: String| Error::Malformed { location: format!("offset {offset}"), message };
            let t = i64::from_le_bytes(rec[0..8].try_into().unwrap());
            if t < 0 {
                return Err(malformed(format!("negative timestamp {t}")));
            }
            let x = u16::from_le_bytes([rec[8], rec[9]]);
            let y = u16::from_le_bytes([rec[10], rec[11]]);
            let p = Polarity::from_i8(rec[12] as i8)
                .ok_or_else(|| malformed(format!("invalid polarity byte {}", rec[12] as i8)))?;
            let label = Label::from_i8(rec[13] as i8)
                .ok_or_else(|| malformed(format!("invalid label byte {}", rec[13] as i8)))?;
            Ok(Event { t, x, y, p, label })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_csv_record() {
        let events = read_csv("t_us,x,y,p\n0,5,7,1\n".as_bytes()).unwrap();
        assert_eq!(events, vec![Event::new(0, 5, 7, Polarity::On)]);
        let events = read_csv("0,5,7,1".as_bytes()).unwrap();
        assert_eq!(events[0].label, Label::Unknown);
    }

    #[test]
    fn csv_regression_reported_at_index() {
        let events = read_csv("t_us,x,y,p\n10,0,0,1\n5,0,0,-1\n".as_bytes()).unwrap();
        let err = EventStream::new(events, SensorGeometry::DAVIS346).unwrap_err();
        assert!(matches!(err, Error::TimestampRegression { index: 1, .. }));
    }

    #[test]
    fn malformed_csv_reports_line() {
        let err = read_csv("t_us,x,y,p\n0,1,2,1\n3,x,2,1\n".as_bytes()).unwrap_err();
        match err {
            Error::Malformed { location, .. } => assert_eq!(location, "line 3"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_csv("0,1,2,0\n".as_bytes()).is_err());
        assert!(read_csv("0,1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_stream_files() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t_us,x,y,p\n");
        assert_eq!(encode_binary(&[]), BINARY_MAGIC.to_vec());
        assert!(decode_binary(BINARY_MAGIC).unwrap().is_empty());
    }

    #[test]
    fn labels_written_when_present() {
        let events = vec![
            Event::new(1, 2, 3, Polarity::Off).with_label(Label::Real),
            Event::new(2, 2, 3, Polarity::On),
        ];
        let mut buf = Vec::new();
        write_csv(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "t_us,x,y,p,label\n1,2,3,-1,1\n2,2,3,1,-1\n");
        assert_eq!(read_csv(buf.as_slice()).unwrap(), events);
    }

    #[test]
    fn binary_record_layout() {
        let e = Event::new(0x0102, 3, 4, Polarity::Off).with_label(Label::Noise);
        let bytes = encode_binary(&[e]);
        assert_eq!(bytes.len(), 8 + 16);
        assert_eq!(&bytes[8..], &[2, 1, 0, 0, 0, 0, 0, 0, 3, 0, 4, 0, 0xff, 0, 0, 0]);
        assert_eq!(decode_binary(&bytes).unwrap(), vec![e]);
        assert!(matches!(decode_binary(&bytes[..20]), Err(Error::Malformed { .. })));
    }
}
