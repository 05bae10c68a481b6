//! File formats. Every JSON document carries `"format_version": 1`.
//!
//! * signal / coefficient files: JSON with the kernel, `t_start` and `coeffs`;
//! * event streams: a `t,p` CSV plus a `<stem>.meta.json` sidecar holding
//!   `C`, `t0` and `f_t0`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::encoder::{Event, EventStream, Polarity};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::sigmodel::SiSignal;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelRecord {
    Bspline { degree: u32, h: f64 },
    Sinc { h: f64 },
}

impl From<&KernelSpec> for KernelRecord {
    fn from(spec: &KernelSpec) -> Self {
        match spec.family() {
            KernelFamily::BSpline { degree } => KernelRecord::Bspline { degree, h: spec.h() },
            KernelFamily::Sinc => KernelRecord::Sinc { h: spec.h() },
        }
    }
}

impl TryFrom<KernelRecord> for KernelSpec {
    type Error = Error;

    fn try_from(rec: KernelRecord) -> Result<Self> {
        match rec {
            KernelRecord::Bspline { degree, h } => KernelSpec::bspline(degree, h),
            KernelRecord::Sinc { h } => KernelSpec::sinc(h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub format_version: u32,
    pub kernel: KernelRecord,
    pub t_start: f64,
    pub coeffs: Vec<f64>,
}

impl From<&SiSignal> for SignalRecord {
    fn from(sig: &SiSignal) -> Self {
        SignalRecord {
            format_version: FORMAT_VERSION,
            kernel: sig.kernel().into(),
            t_start: sig.t_start(),
            coeffs: sig.coeffs().to_vec(),
        }
    }
}

impl TryFrom<SignalRecord> for SiSignal {
    type Error = Error;

    fn try_from(rec: SignalRecord) -> Result<Self> {
        check_version(rec.format_version)?;
        SiSignal::new(rec.kernel.try_into()?, rec.coeffs, rec.t_start)
    }
}

/// Any serialisable payload with a `format_version` field in front.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versioned<T> {
    pub format_version: u32,
    #[serde(flatten)]
    pub inner: T,
}

impl<T> Versioned<T> {
    pub fn new(inner: T) -> Self {
        Versioned { format_version: FORMAT_VERSION, inner }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMeta {
    pub format_version: u32,
    #[serde(rename = "C")]
    pub threshold: f64,
    pub t0: f64,
    pub f_t0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct EventRow {
    t: f64,
    p: i64,
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported format_version {v}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_signal(path: &Path, sig: &SiSignal) -> Result<()> {
    write_json(path, &SignalRecord::from(sig))
}

pub fn read_signal(path: &Path) -> Result<SiSignal> {
    read_json::<SignalRecord>(path)?.try_into()
}

/// `events.csv` → `events.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn write_events(csv: &Path, es: &EventStream) -> Result<()> {
    let mut w = csv::Writer::from_path(csv).map_err(csv_error)?;
    for e in es.events() {
        w.serialize(EventRow { t: e.t, p: e.polarity.sign() }).map_err(csv_error)?;
    }
    if es.is_empty() {
        w.write_record(["t", "p"]).map_err(csv_error)?;
    }
    w.flush()?;
    let meta = EventMeta { format_version: FORMAT_VERSION, threshold: es.threshold(), t0: es.t0(), f_t0: es.f_t0() };
    write_json(&meta_path(csv), &meta)
}

pub fn read_events(csv: &Path) -> Result<EventStream> {
    let meta: EventMeta = read_json(&meta_path(csv))?;
    check_version(meta.format_version)?;
    let mut r = csv::Reader::from_path(csv).map_err(csv_error)?;
    let mut events = Vec::new();
    for row in r.deserialize::<EventRow>() {
        let row = row.map_err(csv_error)?;
        events.push(Event { t: row.t, polarity: Polarity::from_sign(row.p)? });
    }
    EventStream::new(meta.threshold, meta.t0, meta.f_t0, events)
}

/// Rows with a header taken from the field names.
pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        Error::Parse(format!("csv: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode, Window};
    use crate::sigmodel::random_signal;

    #[test]
    fn signal_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.json");
        let sig = random_signal(KernelSpec::bspline(3, 0.0625).unwrap(), 9, 5).unwrap();
        write_signal(&path, &sig).unwrap();
        assert_eq!(read_signal(&path).unwrap(), sig);
        let preset = SiSignal::paper_sinc();
        write_signal(&path, &preset).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"format_version\": 1"));
        assert!(text.contains("11.12"));
        assert_eq!(read_signal(&path).unwrap(), preset);
    }

    #[test]
    fn events_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let sig = random_signal(KernelSpec::bspline(2, 0.125).unwrap(), 8, 1).unwrap();
        let w = Window::for_signal(&sig);
        let es = encode(&sig, 0.1, w, 0.0).unwrap();
        assert!(!es.is_empty());
        write_events(&path, &es).unwrap();
        assert!(meta_path(&path).ends_with("events.meta.json"));
        assert_eq!(read_events(&path).unwrap(), es);
        let head = fs::read_to_string(&path).unwrap();
        assert!(head.starts_with("t,p\n"));
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.json");
        fs::write(&path, r#"{"format_version":2,"kernel":{"family":"sinc","h":0.1},"t_start":0,"coeffs":[1]}"#)
            .unwrap();
        assert!(matches!(read_signal(&path), Err(Error::Parse(_))));
        fs::write(&path, r#"{"format_version":1,"kernel":{"family":"sinc","h":-1},"t_start":0,"coeffs":[1]}"#)
            .unwrap();
        assert!(matches!(read_signal(&path), Err(Error::InvalidParameter(_))));
        assert!(matches!(read_signal(&dir.path().join("missing.json")), Err(Error::Io(_))));
    }

    #[test]
    fn kernel_spec_strings() {
        let k: KernelSpec = "bspline:2:0.125".parse().unwrap();
        assert_eq!(k, KernelSpec::bspline(2, 0.125).unwrap());
        assert_eq!(k.to_string(), "bspline:2:0.125");
        let s: KernelSpec = "sinc:0.5".parse().unwrap();
        assert_eq!(s.to_string().parse::<KernelSpec>().unwrap(), s);
        assert!("bspline:x:1".parse::<KernelSpec>().is_err());
        assert!("sinc:0".parse::<KernelSpec>().is_err());
        assert!("gauss:1".parse::<KernelSpec>().is_err());
    }
}
