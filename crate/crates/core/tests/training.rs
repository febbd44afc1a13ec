//! Training, personalization and quantization on small synthetic problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinyfit_core::nn::{evaluate, init_model, personalize, train, Checkpoint, LayerId, TrainConfig};
use tinyfit_core::quant::{package, PackageConfig};
use tinyfit_core::signal::synthetic::{SyntheticConfig, SyntheticGenerator};
use tinyfit_core::signal::{denormalize, fit_channel_stats, normalize, windows_from_recordings};
use tinyfit_core::{ClassMap, Engine, Window};

/// Three classes of noisy sinusoids at 0.5, 1.5 and 3 Hz on every channel.
fn separable(n: usize, seed: u64) -> Vec<Window> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freqs = [0.5f32, 1.5, 3.0];
    (0..n)
        .map(|i| {
            let k = i % 3;
            let phase: f32 = rng.random_range(0.0..std::f32::consts::TAU);
            let v: Vec<f32> = (0..360)
                .map(|j| {
                    let t = (j / 6) as f32 / 20.0;
                    (std::f32::consts::TAU * freqs[k] * t + phase + j as f32 % 6.0).sin()
                        + rng.random_range(-0.3f32..0.3)
                })
                .collect();
            Window::from_flat(&v, Some(format!("k{k}")), "1").unwrap()
        })
        .collect()
}

fn classes3() -> ClassMap {
    ClassMap::new(["k0", "k1", "k2"])
}

#[test]
fn learns_separable_classes() {
    let data = separable(200, 1);
    let model = init_model(classes3(), 7).unwrap();
    let (trained, history) = train(&model, &data, &TrainConfig::default()).unwrap();
    assert_eq!(history.len(), 30);
    assert!(history.last().unwrap().loss < history[0].loss);
    let acc = evaluate(&trained, &separable(150, 2)).unwrap().accuracy;
    assert!(acc >= 0.95, "held-out accuracy {acc}");
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let data = separable(90, 3);
    let model = init_model(classes3(), 7).unwrap();
    let config = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&model, &data, &config).unwrap())
    };
    let (a, ha) = run(1);
    let (b, hb) = run(4);
    assert_eq!(a.params, b.params);
    assert_eq!(ha, hb);
}

#[test]
fn personalization_freezes_everything_but_the_head() {
    let data = separable(120, 4);
    let (pretrained, _) = train(
        &init_model(classes3(), 7).unwrap(),
        &data,
        &TrainConfig {
            epochs: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let user = separable(60, 5);
    for target in [classes3(), ClassMap::new(["k2", "k0"])] {
        let out = personalize(
            &pretrained,
            &user,
            &target,
            15,
            &TrainConfig {
                epochs: 5,
                ..TrainConfig::fine_tune()
            },
        )
        .unwrap();
        assert_eq!(out.selected.len(), 15 * target.len());
        for id in [LayerId::Conv1, LayerId::Conv2, LayerId::Dense1] {
            let (a, b) = (pretrained.params.layer(id), out.model.params.layer(id));
            assert!(a
                .weights
                .iter()
                .zip(&b.weights)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a.bias.iter().zip(&b.bias).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_ne!(
            pretrained.params.layer(LayerId::Head),
            out.model.params.layer(LayerId::Head)
        );
        assert_eq!(out.model.classes, target);
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let data = separable(60, 6);
    let (model, _) = train(
        &init_model(classes3(), 7).unwrap(),
        &data,
        &TrainConfig {
            epochs: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let stats = fit_channel_stats(&data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tflt");
    Checkpoint {
        model: model.clone(),
        stats,
    }
    .save(&path)
    .unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.stats, stats);
    for w in &data {
        assert_eq!(back.model.predict(w).unwrap(), model.predict(w).unwrap());
    }
}

/// The integer engine executing a packaged model agrees with the float
/// model on held-out subjects.
#[test]
fn quantized_engine_tracks_float_model() {
    let gen = SyntheticGenerator::new(SyntheticConfig {
        subjects: 8,
        recordings_per_class: 1,
        seconds_per_recording: 30.0,
        ..SyntheticConfig::default()
    });
    let windows = windows_from_recordings(&gen.dataset()).unwrap();
    let (train_raw, held_raw): (Vec<Window>, Vec<Window>) = windows
        .into_iter()
        .partition(|w| w.subject_id.parse::<u32>().unwrap() <= 6);
    let stats = fit_channel_stats(&train_raw).unwrap();
    let train_set: Vec<Window> = train_raw.iter().map(|w| normalize(w, &stats)).collect();
    let held: Vec<Window> = held_raw.iter().map(|w| normalize(w, &stats)).collect();
    let classes = ClassMap::new(&gen.config().classes);
    let (model, _) = train(
        &init_model(classes, 7).unwrap(),
        &train_set,
        &TrainConfig {
            epochs: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let bundle = package(&model, &stats, &train_set, &PackageConfig::default()).unwrap();
    let mut engine = Engine::default();
    engine.load(&bundle.serialize().unwrap()).unwrap();

    let (mut agree, mut float_ok, mut int_ok) = (0, 0, 0);
    for (w, raw) in held.iter().zip(&held_raw) {
        let f = model.predict(w).unwrap();
        let q = engine.infer(raw.rows()).unwrap().class_id;
        let truth = model.classes.id(w.label().unwrap()).unwrap();
        agree += (f == q) as usize;
        float_ok += (f == truth) as usize;
        int_ok += (q == truth) as usize;
    }
    let n = held.len() as f64;
    let agreement = agree as f64 / n;
    let drop = (float_ok as f64 - int_ok as f64) / n;
    assert!(held.len() >= 100);
    assert!(agreement >= 0.90, "agreement {agreement}");
    assert!(drop <= 0.03, "accuracy drop {drop}");
    // the engine normalizes raw input the same way as the float path
    let back = denormalize(&held[0], &stats);
    assert!(back
        .as_flat()
        .iter()
        .zip(held_raw[0].as_flat())
        .all(|(a, b)| (a - b).abs() < 1e-4 * (1.0 + b.abs())));
}
