use super::{ImuSample, Recording, Result, SignalError};

/// Linearly interpolates `rec` onto a uniform grid at `target_hz` that starts
/// at the first timestamp and ends at the last grid point not past the final
/// timestamp.
pub fn resample(rec: &Recording, target_hz: f64) -> Result<Recording> {
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(SignalError::BadRate(target_hz));
    }
    let src = &rec.samples;
    if src.len() < 2 {
        return Err(SignalError::EmptyRecording(src.len()));
    }
    for (i, pair) in src.windows(2).enumerate() {
        if !(pair[0].t.is_finite() && pair[1].t.is_finite()) || pair[1].t < pair[0].t {
            return Err(SignalError::BadTimestamps { index: i + 1 });
        }
    }

    let t0 = src[0].t;
    let span = src[src.len() - 1].t - t0;
    // Small slack so spans like 2.9999999 s still reach the 3.0 s grid point.
    let count = (span * target_hz + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut j = 0usize;
    for k in 0..count {
        let t = t0 + k as f64 / target_hz;
        // Advance to the last source sample with time <= t.
        while j + 1 < src.len() && src[j + 1].t <= t {
            j += 1;
        }
        let a = &src[j];
        let values = if a.t == t || j + 1 == src.len() {
            a.values
        } else {
            let b = &src[j + 1];
            let frac = (t - a.t) / (b.t - a.t);
            std::array::from_fn(|c| a.values[c] + (b.values[c] - a.values[c]) * frac)
        };
        out.push(ImuSample { t, values });
    }
    Ok(Recording {
        subject_id: rec.subject_id.clone(),
        class_label: rec.class_label.clone(),
        rate_hz: target_hz,
        samples: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::CHANNELS;

    fn recording(times: &[f64], f: impl Fn(f64) -> [f64; CHANNELS], rate: f64) -> Recording {
        Recording {
            subject_id: "s1".into(),
            class_label: "walk".into(),
            rate_hz: rate,
            samples: times.iter().map(|&t| ImuSample { t, values: f(t) }).collect(),
        }
    }

    /// Independent oracle: for each query time, scan every source interval.
    fn brute_force_interp(src: &[ImuSample], t: f64) -> [f64; CHANNELS] {
        for w in src.windows(2) {
            if w[0].t <= t && t <= w[1].t {
                if w[1].t == w[0].t {
                    return w[1].values;
                }
                let u = (t - w[0].t) / (w[1].t - w[0].t);
                return std::array::from_fn(|c| w[0].values[c] * (1.0 - u) + w[1].values[c] * u);
            }
        }
        src.last().unwrap().values
    }

    #[test]
    fn identity_on_target_grid() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 / 20.0).collect();
        let rec = recording(&times, |t| [1.5, -2.25, 9.81, t.sin(), 0.0, 7.0], 20.0);
        let out = resample(&rec, 20.0).unwrap();
        assert_eq!(out.samples.len(), rec.samples.len());
        for (a, b) in out.samples.iter().zip(&rec.samples) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn constant_100hz_to_20hz() {
        // 301 samples span exactly [0, 3.0] s.
        let times: Vec<f64> = (0..=300).map(|i| i as f64 / 100.0).collect();
        let k = [0.3, -1.0, 9.8, 0.01, 0.02, -0.03];
        let out = resample(&recording(&times, |_| k, 100.0), 20.0).unwrap();
        assert_eq!(out.samples.len(), (3.0f64 * 20.0).floor() as usize + 1);
        assert_eq!(out.samples.len(), 61);
        assert!(out.samples.iter().all(|s| s.values == k));
        assert_eq!(out.rate_hz, 20.0);

        // 300 samples at 100 Hz only span 2.99 s, so the 3.0 s point is absent.
        let out = resample(&recording(&times[..300], |_| k, 100.0), 20.0).unwrap();
        assert_eq!(out.samples.len(), 60);
        assert!(out.samples.iter().all(|s| s.values == k));
    }

    #[test]
    fn matches_brute_force_oracle_and_stays_bracketed() {
        // 25 Hz source with a little timestamp jitter.
        let times: Vec<f64> = (0..250)
            .map(|i| i as f64 / 25.0 + if i % 7 == 3 { 0.003 } else { 0.0 })
            .collect();
        let f = |t: f64| {
            [
                (3.0 * t).sin(),
                (1.3 * t).cos() * 4.0,
                t * 0.5,
                (t * 7.0).sin().abs(),
                -t,
                ((t * 11.0).sin() * 100.0).round(),
            ]
        };
        let rec = recording(&times, f, 25.0);
        let out = resample(&rec, 20.0).unwrap();
        for (k, s) in out.samples.iter().enumerate() {
            assert!((s.t - (times[0] + k as f64 * 0.05)).abs() < 1e-12);
            if k > 0 {
                assert!((s.t - out.samples[k - 1].t - 0.05).abs() < 1e-9);
            }
            let expect = brute_force_interp(&rec.samples, s.t);
            let j = rec.samples.iter().rposition(|x| x.t <= s.t).unwrap();
            let nxt = (j + 1).min(rec.samples.len() - 1);
            for (c, (&v, &e)) in s.values.iter().zip(&expect).enumerate() {
                assert!((v - e).abs() < 1e-9);
                let a = rec.samples[j].values[c];
                let b = rec.samples[nxt].values[c];
                assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
            }
        }
    }

    #[test]
    fn error_cases() {
        let one = recording(&[0.0], |_| [0.0; 6], 20.0);
        assert!(matches!(resample(&one, 20.0), Err(SignalError::EmptyRecording(1))));
        let bad = recording(&[0.0, 0.1, 0.05], |_| [0.0; 6], 20.0);
        assert!(matches!(
            resample(&bad, 20.0),
            Err(SignalError::BadTimestamps { index: 2 })
        ));
        let ok = recording(&[0.0, 0.1], |_| [0.0; 6], 20.0);
        assert!(matches!(resample(&ok, 0.0), Err(SignalError::BadRate(_))));
    }

    #[test]
    fn duplicate_timestamps_are_tolerated() {
        let rec = recording(&[0.0, 0.05, 0.05, 0.1], |t| [t; 6], 20.0);
        let out = resample(&rec, 20.0).unwrap();
        assert_eq!(out.samples.len(), 3);
        assert!(out.samples.iter().all(|s| s.values.iter().all(|v| v.is_finite())));
    }
}
