use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, SignalError, Window};

/// Number of subjects held out for the personalized setting.
pub const PERSONALIZED_SUBJECTS: usize = 4;

/// Windows partitioned by subject into a generalized pool and four
/// personalized users.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub generalized: Vec<Window>,
    pub personalized: BTreeMap<String, Vec<Window>>,
}

impl DatasetSplit {
    pub fn generalized_subjects(&self) -> BTreeSet<&str> {
        self.generalized.iter().map(|w| w.subject_id.as_str()).collect()
    }
}

/// Picks the personalized subjects with a seeded draw over the sorted subject
/// list. Returns `(generalized, personalized)`.
pub fn slice_subjects<'a, I>(subjects: I, seed: u64) -> Result<(BTreeSet<String>, BTreeSet<String>)>
where
    I: IntoIterator<Item = &'a str>,
{
    let all: BTreeSet<String> = subjects.into_iter().map(str::to_owned).collect();
    if all.len() <= PERSONALIZED_SUBJECTS {
        return Err(SignalError::TooFewSubjects(all.len()));
    }
    let ordered: Vec<&String> = all.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: BTreeSet<String> = sample(&mut rng, ordered.len(), PERSONALIZED_SUBJECTS)
        .into_iter()
        .map(|i| ordered[i].clone())
        .collect();
    let rest = all.difference(&picked).cloned().collect();
    Ok((rest, picked))
}

/// Partitions windows by subject. The choice of personalized users depends
/// only on the subject set and `seed`.
pub fn slice_dataset(windows: Vec<Window>, seed: u64) -> Result<DatasetSplit> {
    let (_, personal) = slice_subjects(windows.iter().map(|w| w.subject_id.as_str()), seed)?;
    let mut personalized: BTreeMap<String, Vec<Window>> = personal.iter().map(|s| (s.clone(), Vec::new())).collect();
    let mut generalized = Vec::new();
    for w in windows {
        match personalized.get_mut(&w.subject_id) {
            Some(bucket) => bucket.push(w),
            None => generalized.push(w),
        }
    }
    Ok(DatasetSplit {
        generalized,
        personalized,
    })
}
