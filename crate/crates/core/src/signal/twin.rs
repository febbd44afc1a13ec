//! `TWIN` windowed-dataset file.
//!
//! Little-endian layout: magic `TWIN`, u32 window count, u16 class count,
//! class-name table (u8 length-prefixed UTF-8 per class), then per window a
//! u16 class id, a u16 subject index and 360 f32 values in time-major order.
//! The subject index is the numeric subject id.

use std::path::Path;

use super::{Result, SignalError, Window, CHANNELS, WINDOW_LEN};
use crate::codec::{put_f32, put_short_str, put_u16, put_u32, Reader};
use crate::ClassMap;

pub const MAGIC: &[u8; 4] = b"TWIN";

/// Encodes labeled windows. Every label must be in `classes` and every
/// subject id must parse as a u16.
pub fn encode(classes: &ClassMap, windows: &[Window]) -> Result<Vec<u8>> {
    if classes.len() > u16::MAX as usize {
        return Err(SignalError::MalformedTwin("too many classes".into()));
    }
    let count = u32::try_from(windows.len()).map_err(|_| SignalError::MalformedTwin("too many windows".into()))?;
    let mut out = Vec::with_capacity(16 + windows.len() * (4 + 4 * WINDOW_LEN * CHANNELS));
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, count);
    put_u16(&mut out, classes.len() as u16);
    for name in classes.names() {
        if name.len() > u8::MAX as usize {
            return Err(SignalError::MalformedTwin(format!("class name too long: {name}")));
        }
        put_short_str(&mut out, name);
    }
    for w in windows {
        let label = w.label().ok_or(SignalError::MissingLabel)?;
        let class = classes
            .id(label)
            .ok_or_else(|| SignalError::MalformedTwin(format!("unknown class {label:?}")))?;
        let subject: u16 = w
            .subject_id
            .parse()
            .map_err(|_| SignalError::BadSubjectId(w.subject_id.clone()))?;
        put_u16(&mut out, class as u16);
        put_u16(&mut out, subject);
        for v in w.flat() {
            put_f32(&mut out, v);
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(ClassMap, Vec<Window>)> {
    let bad = |e: crate::codec::DecodeError| SignalError::MalformedTwin(e.to_string());
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(bad)? != MAGIC {
        return Err(SignalError::MalformedTwin("bad magic".into()));
    }
    let count = r.u32().map_err(bad)? as usize;
    let n_classes = r.u16().map_err(bad)? as usize;
    let mut names = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        names.push(r.short_str().map_err(bad)?);
    }
    let classes = ClassMap::new(names);
    if classes.len() != n_classes {
        return Err(SignalError::MalformedTwin("duplicate class names".into()));
    }
    let per_window = 4 + 4 * WINDOW_LEN * CHANNELS;
    if r.remaining() != count * per_window {
        return Err(SignalError::MalformedTwin(format!(
            "expected {} window bytes, found {}",
            count * per_window,
            r.remaining()
        )));
    }
    let mut windows = Vec::with_capacity(count);
    let mut values = vec![0f32; WINDOW_LEN * CHANNELS];
    for _ in 0..count {
        let class = r.u16().map_err(bad)? as usize;
        let subject = r.u16().map_err(bad)?;
        for v in values.iter_mut() {
            *v = r.f32().map_err(bad)?;
        }
        let label = classes
            .name(class)
            .ok_or_else(|| SignalError::MalformedTwin(format!("class id {class} out of range")))?;
        windows.push(Window::from_flat(&values, Some(label.to_owned()), subject.to_string())?);
    }
    Ok((classes, windows))
}

pub fn write(path: impl AsRef<Path>, classes: &ClassMap, windows: &[Window]) -> Result<()> {
    std::fs::write(path, encode(classes, windows)?)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<(ClassMap, Vec<Window>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SignalError::DatasetNotFound(path.to_owned()),
        _ => SignalError::Io(e),
    })?;
    decode(&bytes)
}
