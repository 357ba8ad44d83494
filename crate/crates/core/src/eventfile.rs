//! Binary event file.
//!
//! All integers little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BLEV"
//! 4       2     format version (1)
//! 6       4     L = byte length of the configuration text
//! 10      L     configuration text (UTF-8, key = value format)
//! 10+L    4     number of runs
//! 14+L    8     N = number of records
//! 22+L    13*N  records
//! ```
//!
//! Record: pixel (1 byte, row*4+col), tick (u64), run (u32). Records are
//! sorted by (run, tick).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::config_text;
use crate::error::{FormatError, Result};
use crate::model::{ExperimentConfig, PhotonEvent, PixelId, Tick};

pub const MAGIC: [u8; 4] = *b"BLEV";
pub const VERSION: u16 = 1;
pub const RECORD_LEN: usize = 13;

/// Contents of an event file.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub config: ExperimentConfig,
    pub n_runs: u32,
    pub events: Vec<PhotonEvent>,
}

impl Recording {
    /// Seconds of DAQ live time covered by the recording.
    pub fn live_time(&self) -> f64 {
        self.config.daq.live_time_per_run() * f64::from(self.n_runs)
    }
}

pub fn is_sorted(events: &[PhotonEvent]) -> bool {
    events
        .windows(2)
        .all(|w| (w[0].run, w[0].time) <= (w[1].run, w[1].time))
}

pub fn encode<W: Write>(
    mut w: W,
    config: &ExperimentConfig,
    n_runs: u32,
    events: &[PhotonEvent],
) -> Result<()> {
    if !is_sorted(events) {
        return Err(crate::Error::Precondition(
            "events must be sorted by (run, tick) before writing".into(),
        ));
    }
    let text = config_text::render(config);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(text.len() as u32).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    w.write_all(&n_runs.to_le_bytes())?;
    w.write_all(&(events.len() as u64).to_le_bytes())?;
    let mut rec = [0u8; RECORD_LEN];
    for e in events {
        rec[0] = e.pixel.index();
        rec[1..9].copy_from_slice(&e.time.0.to_le_bytes());
        rec[9..13].copy_from_slice(&e.run.to_le_bytes());
        w.write_all(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events(
    path: impl AsRef<Path>,
    config: &ExperimentConfig,
    n_runs: u32,
    events: &[PhotonEvent],
) -> Result<()> {
    let f = File::create(path)?;
    encode(BufWriter::new(f), config, n_runs, events)
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn fill(&mut self, buf: &mut [u8], context: &'static str) -> Result<(), FormatError> {
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => {
                    return Err(FormatError::Truncated {
                        offset: self.offset + got as u64,
                        context,
                    })
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn array<const N: usize>(&mut self, context: &'static str) -> Result<[u8; N], FormatError> {
        let mut b = [0u8; N];
        self.fill(&mut b, context)?;
        Ok(b)
    }
}

pub fn decode<R: Read>(r: R) -> Result<Recording, FormatError> {
    let mut c = Cursor {
        inner: r,
        offset: 0,
    };
    let magic: [u8; 4] = c.array("magic")?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic {
            found: magic,
            expected: MAGIC,
        });
    }
    let version = u16::from_le_bytes(c.array("version")?);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let len = u32::from_le_bytes(c.array("configuration length")?) as usize;
    // read through take() so a corrupt length cannot force a huge allocation
    let mut text = Vec::new();
    (&mut c.inner).take(len as u64).read_to_end(&mut text)?;
    if text.len() < len {
        return Err(FormatError::Truncated {
            offset: c.offset + text.len() as u64,
            context: "configuration text",
        });
    }
    c.offset += len as u64;
    let text = String::from_utf8(text).map_err(|_| FormatError::ConfigEncoding)?;
    let config = config_text::parse(&text).map_err(FormatError::Config)?;
    let n_runs = u32::from_le_bytes(c.array("run count")?);
    let n_records = u64::from_le_bytes(c.array("record count")?);

    let mut events = Vec::with_capacity(n_records.min(1 << 24) as usize);
    let mut prev: Option<(u32, Tick)> = None;
    for index in 0..n_records {
        let offset = c.offset;
        let rec: [u8; RECORD_LEN] = c.array("event record")?;
        let pixel = PixelId::from_index(rec[0]).ok_or(FormatError::InvalidPixel {
            index,
            offset,
            value: rec[0],
        })?;
        let time = Tick(u64::from_le_bytes(rec[1..9].try_into().expect("8 bytes")));
        let run = u32::from_le_bytes(rec[9..13].try_into().expect("4 bytes"));
        if prev.is_some_and(|p| p > (run, time)) {
            return Err(FormatError::Unsorted { index, offset });
        }
        prev = Some((run, time));
        events.push(PhotonEvent { pixel, time, run });
    }
    let mut rest = Vec::new();
    c.inner.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(FormatError::TrailingBytes {
            offset: c.offset,
            extra: rest.len() as u64,
        });
    }
    Ok(Recording {
        config,
        n_runs,
        events,
    })
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Recording> {
    let f = File::open(path)?;
    Ok(decode(BufReader::new(f))?)
}
