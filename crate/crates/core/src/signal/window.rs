use super::{Recording, Result, SignalError, Window, WindowRows, CHANNELS, TARGET_RATE_HZ, WINDOW_LEN, WINDOW_STRIDE};

/// Number of windows `make_windows` yields for a 20 Hz recording of `len` samples.
pub fn window_count(len: usize) -> usize {
    if len < WINDOW_LEN {
        0
    } else {
        (len - WINDOW_LEN) / WINDOW_STRIDE + 1
    }
}

/// True when `next` is the window cut right after `prev` from the same
/// recording: same subject and label, and its first half repeats the
/// previous window's second half.
pub fn windows_chain(prev: &Window, next: &Window) -> bool {
    prev.subject_id == next.subject_id
        && prev.label == next.label
        && prev.rows()[WINDOW_STRIDE..] == next.rows()[..WINDOW_STRIDE]
}

/// Slices a 20 Hz recording into 60-sample windows with a 30-sample hop.
/// Samples after the last full window are discarded.
pub fn make_windows(rec: &Recording) -> Result<Vec<Window>> {
    if (rec.rate_hz - TARGET_RATE_HZ).abs() > 1e-9 {
        return Err(SignalError::RateMismatch {
            expected: TARGET_RATE_HZ,
            actual: rec.rate_hz,
        });
    }
    let n = window_count(rec.samples.len());
    let mut out = Vec::with_capacity(n);
    for w in 0..n {
        let start = w * WINDOW_STRIDE;
        let mut data: Box<WindowRows> = Box::new([[0.0; CHANNELS]; WINDOW_LEN]);
        for (row, s) in data.iter_mut().zip(&rec.samples[start..start + WINDOW_LEN]) {
            *row = s.values.map(|v| v as f32);
        }
        out.push(Window::new(
            data,
            Some(rec.class_label.clone()),
            rec.subject_id.clone(),
        )?);
    }
    Ok(out)
}
