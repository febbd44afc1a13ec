use serde::{Deserialize, Serialize};

use super::{Result, SignalError, Window, WindowRows, CHANNELS, EPSILON_STD, WINDOW_LEN};

/// Per-channel z-score parameters. Fitted on generalized training data only
/// and shipped inside every bundle so the device normalizes identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f32; CHANNELS],
    pub std: [f32; CHANNELS],
}

impl ChannelStats {
    /// Zero mean, unit deviation.
    pub fn identity() -> Self {
        Self {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }

    /// True when every entry is finite and every deviation respects the floor.
    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|m| m.is_finite()) && self.std.iter().all(|s| s.is_finite() && *s >= EPSILON_STD)
    }

    pub fn normalize_value(&self, channel: usize, x: f32) -> f32 {
        (x - self.mean[channel]) / self.std[channel]
    }
}

/// Population mean and standard deviation of every channel over all rows of
/// all windows, with deviations floored at [`EPSILON_STD`].
pub fn fit_channel_stats(windows: &[Window]) -> Result<ChannelStats> {
    if windows.is_empty() {
        return Err(SignalError::EmptyDataset);
    }
    let n = (windows.len() * WINDOW_LEN) as f64;
    let mut sum = [0f64; CHANNELS];
    for w in windows {
        for row in w.rows() {
            for c in 0..CHANNELS {
                sum[c] += row[c] as f64;
            }
        }
    }
    let mean = sum.map(|s| s / n);
    let mut sq = [0f64; CHANNELS];
    for w in windows {
        for row in w.rows() {
            for c in 0..CHANNELS {
                let d = row[c] as f64 - mean[c];
                sq[c] += d * d;
            }
        }
    }
    let mut stats = ChannelStats::identity();
    for c in 0..CHANNELS {
        stats.mean[c] = mean[c] as f32;
        stats.std[c] = ((sq[c] / n).sqrt() as f32).max(EPSILON_STD);
    }
    Ok(stats)
}

fn map_window(w: &Window, f: impl Fn(usize, f32) -> f32) -> Window {
    let mut data: Box<WindowRows> = Box::new([[0.0; CHANNELS]; WINDOW_LEN]);
    for (out, row) in data.iter_mut().zip(w.rows()) {
        for c in 0..CHANNELS {
            out[c] = f(c, row[c]);
        }
    }
    Window::new(data, w.label.clone(), w.subject_id.clone()).expect("finite input and valid stats give finite output")
}

/// Maps entry `(t, c)` to `(x - mean[c]) / std[c]`.
pub fn normalize(w: &Window, stats: &ChannelStats) -> Window {
    debug_assert!(stats.is_valid());
    map_window(w, |c, x| stats.normalize_value(c, x))
}

/// Inverse of [`normalize`].
pub fn denormalize(w: &Window, stats: &ChannelStats) -> Window {
    map_window(w, |c, z| z * stats.std[c] + stats.mean[c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window_from(f: impl Fn(usize, usize) -> f32) -> Window {
        let mut data = Box::new([[0f32; CHANNELS]; WINDOW_LEN]);
        for (t, row) in data.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f(t, c);
            }
        }
        Window::new(data, Some("a".into()), "1").unwrap()
    }

    #[test]
    fn zeros_hit_the_floor() {
        let s = fit_channel_stats(&[window_from(|_, _| 0.0)]).unwrap();
        assert_eq!(s.mean, [0.0; CHANNELS]);
        assert_eq!(s.std, [EPSILON_STD; CHANNELS]);
        let z = normalize(&window_from(|_, _| 0.0), &s);
        assert!(z.flat().all(|v| v == 0.0));
        let z = normalize(&window_from(|_, _| 3.0), &s);
        assert!(z.flat().all(f32::is_finite));
    }

    #[test]
    fn plus_minus_one_channel() {
        let w = window_from(|t, c| {
            if c == 0 {
                if t % 2 == 0 {
                    -1.0
                } else {
                    1.0
                }
            } else {
                2.0
            }
        });
        let s = fit_channel_stats(&[w]).unwrap();
        assert_eq!(s.mean[0], 0.0);
        assert_eq!(s.std[0], 1.0);
        assert_eq!(s.mean[3], 2.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(fit_channel_stats(&[]), Err(SignalError::EmptyDataset)));
    }

    #[test]
    fn window_at_mean_normalizes_to_zero() {
        let ws = vec![
            window_from(|t, c| (t * c) as f32),
            window_from(|t, c| (t + c) as f32 * 0.5),
        ];
        let s = fit_channel_stats(&ws).unwrap();
        let at_mean = window_from(|_, c| s.mean[c]);
        assert!(normalize(&at_mean, &s).flat().all(|v| v == 0.0));
    }

    proptest! {
        #[test]
        fn order_invariant(seed in 0u64..1000) {
            let ws: Vec<Window> = (0..5)
                .map(|k| window_from(|t, c| ((seed as usize + k * 31 + t * 7 + c * 3) % 17) as f32 - 8.0))
                .collect();
            let mut rev = ws.clone();
            rev.reverse();
            prop_assert_eq!(fit_channel_stats(&ws).unwrap(), fit_channel_stats(&rev).unwrap());
        }

        #[test]
        fn denormalize_inverts_normalize(
            vals in proptest::collection::vec(-50f32..50f32, WINDOW_LEN * CHANNELS),
            mean in proptest::array::uniform6(-10f32..10f32),
            std in proptest::array::uniform6(0.1f32..20f32),
        ) {
            let w = Window::from_flat(&vals, None, "x").unwrap();
            let stats = ChannelStats { mean, std };
            let back = denormalize(&normalize(&w, &stats), &stats);
            // f32 storage: relative to the larger of the value and the channel offset.
            for (i, (a, b)) in back.flat().zip(w.flat()).enumerate() {
                let tol = 1e-6 * (b.abs() + mean[i % CHANNELS].abs() + 1.0);
                prop_assert!((a - b).abs() <= tol, "{a} vs {b}");
            }
        }
    }
}
