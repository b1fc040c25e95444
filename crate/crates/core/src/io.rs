//! CSV and binary event file formats.
//!
//! CSV: optional first line `# width=<W> height=<H>`, then `t,x,y,p` rows with
//! `t` in microseconds and `p` in `{1, -1}` (`+1` accepted).
//!
//! Binary: a 16-byte little-endian header (`EVS1`, u32 width, u32 height,
//! u32 reserved) followed by 16-byte records
//! `(u64 t, u16 x, u16 y, i8 p, 3 pad bytes)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, EventStream, Polarity, SensorGeometry};

pub const BIN_MAGIC: [u8; 4] = *b"EVS1";
pub const BIN_HEADER_LEN: usize = 16;
pub const BIN_RECORD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Csv,
    Bin,
}

impl EventFormat {
    /// Guess from the file extension; anything other than `.bin`/`.evs` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("evs") => EventFormat::Bin,
            _ => EventFormat::Csv,
        }
    }
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(EventFormat::Csv),
            "bin" => Ok(EventFormat::Bin),
            other => Err(Error::usage(format!("unknown event format '{other}'"))),
        }
    }
}

pub fn load_events(path: impl AsRef<Path>, format: EventFormat) -> Result<EventStream> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        EventFormat::Csv => read_csv(reader),
        EventFormat::Bin => read_bin(reader),
    }
}

pub fn save_events(path: impl AsRef<Path>, format: EventFormat, stream: &EventStream) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        EventFormat::Csv => write_csv(&mut w, stream),
        EventFormat::Bin => write_bin(&mut w, stream),
    }
    .and_then(|_| w.flush())
    .map_err(|e| Error::io(path, e))
}

fn parse_header(line: &str) -> Option<SensorGeometry> {
    let body = line.trim().strip_prefix('#')?;
    let mut width = None;
    let mut height = None;
    for part in body.split_whitespace() {
        if let Some(v) = part.strip_prefix("width=") {
            width = v.parse().ok();
        } else if let Some(v) = part.strip_prefix("height=") {
            height = v.parse().ok();
        }
    }
    Some(SensorGeometry {
        width: width?,
        height: height?,
    })
}

/// Reads CSV events. Without a geometry header the sensor is sized to the
/// bounding box of the data.
pub fn read_csv<R: BufRead>(reader: R) -> Result<EventStream> {
    let mut geometry = None;
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if events.is_empty() && geometry.is_none() {
                let g = parse_header(trimmed).ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("unrecognised header '{trimmed}'"),
                })?;
                geometry = Some(SensorGeometry::new(g.width, g.height).map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?);
            }
            continue;
        }
        events.push(parse_row(trimmed).map_err(|message| Error::Parse { line: lineno, message })?);
    }
    let geometry = match geometry {
        Some(g) => g,
        None => {
            let w = events.iter().map(|e| u32::from(e.x) + 1).max().unwrap_or(1);
            let h = events.iter().map(|e| u32::from(e.y) + 1).max().unwrap_or(1);
            SensorGeometry::new(w, h)?
        }
    };
    EventStream::new(geometry, events)
}

fn parse_row(row: &str) -> std::result::Result<Event, String> {
    let fields: Vec<&str> = row.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields t,x,y,p, found {}", fields.len()));
    }
    let t = fields[0]
        .parse::<u64>()
        .map_err(|e| format!("bad timestamp '{}': {e}", fields[0]))?;
    let x = fields[1]
        .parse::<u16>()
        .map_err(|e| format!("bad x '{}': {e}", fields[1]))?;
    let y = fields[2]
        .parse::<u16>()
        .map_err(|e| format!("bad y '{}': {e}", fields[2]))?;
    let p = fields[3]
        .parse::<i64>()
        .ok()
        .and_then(Polarity::from_sign)
        .ok_or_else(|| format!("bad polarity '{}', expected 1 or -1", fields[3]))?;
    Ok(Event::new(t, x, y, p))
}

pub fn write_csv<W: Write>(w: &mut W, stream: &EventStream) -> std::io::Result<()> {
    let g = stream.geometry();
    writeln!(w, "# width={} height={}", g.width, g.height)?;
    for e in stream.events() {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.p.sign())?;
    }
    Ok(())
}

pub fn read_bin<R: Read>(mut reader: R) -> Result<EventStream> {
    let mut header = [0u8; BIN_HEADER_LEN];
    reader.read_exact(&mut header).map_err(|e| Error::Parse {
        line: 0,
        message: format!("truncated header: {e}"),
    })?;
    if header[..4] != BIN_MAGIC {
        return Err(Error::Parse {
            line: 0,
            message: format!("bad magic {:?}, expected EVS1", &header[..4]),
        });
    }
    let width = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let geometry = SensorGeometry::new(width, height).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;

    let mut body = Vec::new();
    reader.read_to_end(&mut body).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    if body.len() % BIN_RECORD_LEN != 0 {
        return Err(Error::Parse {
            line: body.len() / BIN_RECORD_LEN + 1,
            message: format!("truncated record ({} trailing bytes)", body.len() % BIN_RECORD_LEN),
        });
    }
    let mut events = Vec::with_capacity(body.len() / BIN_RECORD_LEN);
    for (i, rec) in body.chunks_exact(BIN_RECORD_LEN).enumerate() {
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes(rec[8..10].try_into().unwrap());
        let y = u16::from_le_bytes(rec[10..12].try_into().unwrap());
        let p = Polarity::from_sign(i64::from(rec[12] as i8)).ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("bad polarity byte {}", rec[12] as i8),
        })?;
        events.push(Event::new(t, x, y, p));
    }
    EventStream::new(geometry, events)
}

pub fn write_bin<W: Write>(w: &mut W, stream: &EventStream) -> std::io::Result<()> {
    let g = stream.geometry();
    let mut header = [0u8; BIN_HEADER_LEN];
    header[..4].copy_from_slice(&BIN_MAGIC);
    header[4..8].copy_from_slice(&g.width.to_le_bytes());
    header[8..12].copy_from_slice(&g.height.to_le_bytes());
    w.write_all(&header)?;
    let mut rec = [0u8; BIN_RECORD_LEN];
    for e in stream.events() {
        rec[0..8].copy_from_slice(&e.t.to_le_bytes());
        rec[8..10].copy_from_slice(&e.x.to_le_bytes());
        rec[10..12].copy_from_slice(&e.y.to_le_bytes());
        rec[12] = e.p.sign() as u8;
        w.write_all(&rec)?;
    }
    Ok(())
}
