//! Seeded synthetic wrist-IMU generator used in place of data that is not
//! publicly available.
//!
//! Every class has a sinusoidal signature per channel drawn from disjoint
//! frequency and amplitude bands. Subjects perturb the signatures with a
//! personal tempo, per-channel gain and offset, plus a per-(subject, class)
//! idiosyncrasy, so a model trained on other people transfers imperfectly.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ImuSample, Recording, CHANNELS};

/// Class vocabulary of the wristband this generator stands in for.
pub const BAND_CLASSES: [&str; 7] = [
    "walking",
    "jogging",
    "cycling",
    "typing",
    "writing",
    "ascending_stairs",
    "descending_stairs",
];

/// Native sample rate of the wristband.
pub const BAND_RATE_HZ: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: Vec<String>,
    pub subjects: usize,
    pub recordings_per_class: usize,
    pub seconds_per_recording: f64,
    pub rate_hz: f64,
    /// 0 makes every subject identical; 1 is a moderate spread.
    pub subject_variability: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: BAND_CLASSES.iter().map(|s| s.to_string()).collect(),
            subjects: 16,
            recordings_per_class: 4,
            seconds_per_recording: 45.0,
            rate_hz: BAND_RATE_HZ,
            subject_variability: 1.5,
            noise: 1.0,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
struct Signature {
    offset: [f64; CHANNELS],
    amplitude: [f64; CHANNELS],
    freq: [f64; CHANNELS],
}

#[derive(Debug, Clone)]
struct Style {
    tempo: f64,
    gain: [f64; CHANNELS],
    offset: [f64; CHANNELS],
}

#[derive(Debug, Clone)]
struct Quirk {
    harmonic: f64,
    offset: [f64; CHANNELS],
}

#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    config: SyntheticConfig,
    signatures: Vec<Signature>,
    styles: Vec<Style>,
}

fn mix(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let key = parts.iter().fold(mix(seed), |acc, p| mix(acc ^ mix(*p)));
    ChaCha8Rng::seed_from_u64(key)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

impl SyntheticGenerator {
    pub fn new(config: SyntheticConfig) -> Self {
        let n = config.classes.len();
        let mut rng = rng_for(config.seed, &[1]);
        // Per channel, a permutation assigns every class its own band.
        let mut signatures: Vec<Signature> = (0..n)
            .map(|_| Signature {
                offset: [0.0; CHANNELS],
                amplitude: [0.0; CHANNELS],
                freq: [0.0; CHANNELS],
            })
            .collect();
        for c in 0..CHANNELS {
            let mut freq_rank: Vec<usize> = (0..n).collect();
            let mut amp_rank: Vec<usize> = (0..n).collect();
            freq_rank.shuffle(&mut rng);
            amp_rank.shuffle(&mut rng);
            for (k, sig) in signatures.iter_mut().enumerate() {
                sig.freq[c] = 0.4 + 0.45 * freq_rank[k] as f64 + 0.25 * rng.random::<f64>();
                sig.amplitude[c] = 0.3 + 0.35 * amp_rank[k] as f64 + 0.2 * rng.random::<f64>();
                sig.offset[c] = 1.2 * normal(&mut rng);
            }
        }
        let v = config.subject_variability;
        let styles = (0..config.subjects)
            .map(|s| {
                let mut rng = rng_for(config.seed, &[2, s as u64]);
                let tempo = 1.0 + 0.25 * v * (2.0 * rng.random::<f64>() - 1.0);
                let mut gain = [0.0; CHANNELS];
                let mut offset = [0.0; CHANNELS];
                for c in 0..CHANNELS {
                    gain[c] = 1.0 + 0.45 * v * (2.0 * rng.random::<f64>() - 1.0);
                    offset[c] = 0.6 * v * normal(&mut rng);
                }
                Style { tempo, gain, offset }
            })
            .collect();
        Self {
            config,
            signatures,
            styles,
        }
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    /// Subject ids are `"1"`, `"2"`, ... so they fit a u16 index.
    pub fn subject_id(index: usize) -> String {
        (index + 1).to_string()
    }

    fn quirk(&self, subject: usize, class: usize) -> Quirk {
        let v = self.config.subject_variability;
        let mut rng = rng_for(self.config.seed, &[3, subject as u64, class as u64]);
        let harmonic = 0.6 * v * rng.random::<f64>();
        let mut offset = [0.0; CHANNELS];
        for o in offset.iter_mut() {
            *o = 0.5 * v * normal(&mut rng);
        }
        Quirk { harmonic, offset }
    }

    /// Sample values at time `t` (no noise) for one subject and class.
    fn clean(&self, subject: usize, class: usize, quirk: &Quirk, phase: &[f64; CHANNELS], t: f64) -> [f64; CHANNELS] {
        let sig = &self.signatures[class];
        let style = &self.styles[subject % self.styles.len()];
        let mut v = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            let w = 2.0 * PI * sig.freq[c] * style.tempo;
            let wave = (w * t + phase[c]).sin() + quirk.harmonic * (2.0 * w * t + 2.0 * phase[c]).sin();
            v[c] = sig.offset[c] + style.offset[c] + quirk.offset[c] + style.gain[c] * sig.amplitude[c] * wave;
        }
        v
    }

    /// One recording of `seconds` at `rate_hz`; fully determined by the
    /// arguments and the generator seed.
    pub fn recording_with(&self, subject: usize, class: usize, index: usize, seconds: f64, rate_hz: f64) -> Recording {
        let mut rng = rng_for(self.config.seed, &[4, subject as u64, class as u64, index as u64]);
        let mut phase = [0.0; CHANNELS];
        for p in phase.iter_mut() {
            *p = 2.0 * PI * rng.random::<f64>();
        }
        let quirk = self.quirk(subject, class);
        let n = (seconds * rate_hz).round() as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / rate_hz;
                let mut v = self.clean(subject, class, &quirk, &phase, t);
                for x in v.iter_mut() {
                    *x += self.config.noise * normal(&mut rng);
                }
                ImuSample { t, values: v }
            })
            .collect();
        Recording {
            subject_id: Self::subject_id(subject),
            class_label: self.config.classes[class].clone(),
            rate_hz,
            samples,
        }
    }

    pub fn recording(&self, subject: usize, class: usize, index: usize) -> Recording {
        self.recording_with(
            subject,
            class,
            index,
            self.config.seconds_per_recording,
            self.config.rate_hz,
        )
    }

    /// Every (subject, class, index) recording, ordered by subject then class.
    pub fn dataset(&self) -> Vec<Recording> {
        let mut out = Vec::new();
        for s in 0..self.config.subjects {
            for k in 0..self.config.classes.len() {
                for i in 0..self.config.recordings_per_class {
                    out.push(self.recording(s, k, i));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_finite() {
        let g = SyntheticGenerator::new(SyntheticConfig::default());
        let a = g.recording(3, 2, 1);
        let b = SyntheticGenerator::new(SyntheticConfig::default()).recording(3, 2, 1);
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), (45.0f64 * 25.0) as usize);
        assert_eq!(a.subject_id, "4");
        assert_eq!(a.class_label, "cycling");
        assert!(a.samples.iter().all(|s| s.values.iter().all(|v| v.is_finite())));
        assert_ne!(a, g.recording(3, 2, 0));
    }

    #[test]
    fn frequency_bands_are_disjoint() {
        let g = SyntheticGenerator::new(SyntheticConfig::default());
        for c in 0..CHANNELS {
            let mut f: Vec<f64> = g.signatures.iter().map(|s| s.freq[c]).collect();
            f.sort_by(f64::total_cmp);
            for pair in f.windows(2) {
                assert!(pair[1] - pair[0] > 0.19);
            }
        }
    }

    #[test]
    fn dataset_inventory() {
        let cfg = SyntheticConfig {
            subjects: 5,
            recordings_per_class: 1,
            seconds_per_recording: 4.0,
            ..Default::default()
        };
        let recs = SyntheticGenerator::new(cfg).dataset();
        assert_eq!(recs.len(), 5 * 7);
        assert_eq!(recs[0].subject_id, "1");
        assert_eq!(recs[34].subject_id, "5");
    }
}
