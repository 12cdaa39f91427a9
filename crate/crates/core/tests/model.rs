use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rvrecon::dataset::{build_windows, normalize, ScanNorm};
use rvrecon::model::{
    batch_input, init_parameters, predict_dataset, predict_series, read_weights, train,
    write_weights, Activation, ConvSpec, ModelConfig, ModelError, Network, TrainHyper,
};
use rvrecon::physio::{Measure, TargetSeries};
use rvrecon::{AlignmentMode, RoiTimeseries, WindowedDataset};

fn roi(id: &str, n: usize, rois: usize, seed: u64) -> RoiTimeseries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Array2::from_shape_fn((n, rois), |_| StandardNormal.sample(&mut rng));
    RoiTimeseries {
        scan_id: id.into(),
        subject_id: None,
        data,
        tr_seconds: 0.8,
        roi_names: RoiTimeseries::default_names(rois),
    }
}

fn target(id: &str, values: Vec<f64>) -> TargetSeries {
    TargetSeries {
        scan_id: id.into(),
        measure: Measure::Rv,
        n_volumes: values.len(),
        values,
        tr_seconds: 0.8,
    }
}

/// Target is a fixed linear filter of the ROI values around the target row.
fn linear_scan(id: &str, n: usize, seed: u64) -> WindowedDataset {
    let r = roi(id, n, 3, seed);
    let w = [[0.5, -1.0, 0.3], [0.2, 0.8, -0.4], [1.0, 0.1, 0.6]];
    let mut t = vec![0.0; n];
    for k in 1..n - 1 {
        for (lag, row) in w.iter().enumerate() {
            for (c, &wc) in row.iter().enumerate() {
                t[k] += wc * r.data[[k + lag - 1, c]];
            }
        }
    }
    build_windows(&r, &target(id, t), 8, AlignmentMode::Middle).unwrap()
}

fn linear_config() -> ModelConfig {
    ModelConfig {
        window_size: 8,
        n_rois: 3,
        conv_specs: vec![ConvSpec {
            out_channels: 4,
            kernel_size: 3,
            stride: 1,
            activation: Activation::Identity,
        }],
        head: vec![1],
        seed: 5,
    }
}

#[test]
fn learns_a_linear_filter() {
    let tr = linear_scan("a", 400, 1);
    let va = linear_scan("b", 200, 2);
    let cfg = linear_config();
    let hyper = TrainHyper {
        epochs: 40,
        batch_size: 16,
        lr: 1e-2,
        seed: 3,
        ..TrainHyper::default()
    };
    let initial = init_parameters(&cfg, cfg.seed)
        .unwrap()
        .evaluate(&va, 64)
        .unwrap();
    let state = train(&tr, Some(&va), &cfg, &hyper).unwrap();
    let fin = state.evaluate(&va, 64).unwrap();
    assert!(fin < 0.1 * initial, "initial {initial}, final {fin}");
    assert_eq!(state.history.len(), 40);
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let tr = linear_scan("a", 60, 1);
    let cfg = linear_config();
    let hyper = TrainHyper {
        epochs: 0,
        ..TrainHyper::default()
    };
    let state = train(&tr, None, &cfg, &hyper).unwrap();
    assert_eq!(state, init_parameters(&cfg, cfg.seed).unwrap());
    assert!(state.history.is_empty());
    assert_eq!(state.step, 0);
}

#[test]
fn training_is_deterministic() {
    let tr = linear_scan("a", 120, 1);
    let cfg = ModelConfig::tiny(8, 3);
    let hyper = TrainHyper {
        epochs: 3,
        batch_size: 7,
        seed: 11,
        ..TrainHyper::default()
    };
    let a = train(&tr, None, &cfg, &hyper).unwrap();
    let b = train(&tr, None, &cfg, &hyper).unwrap();
    assert_eq!(a, b);
    let other = train(&tr, None, &cfg, &TrainHyper { seed: 12, ..hyper }).unwrap();
    assert_ne!(a.network, other.network);
}

#[test]
fn full_batch_small_step_decreases_loss() {
    let tr = linear_scan("a", 80, 4);
    let cfg = linear_config();
    let hyper = TrainHyper {
        epochs: 15,
        batch_size: tr.len(),
        lr: 1e-4,
        ..TrainHyper::default()
    };
    let state = train(&tr, None, &cfg, &hyper).unwrap();
    let losses: Vec<f64> = state.history.iter().map(|h| h.train_loss).collect();
    assert!(losses.windows(2).all(|p| p[1] < p[0]), "{losses:?}");
}

#[test]
fn rejects_mismatched_dataset() {
    let tr = linear_scan("a", 60, 1);
    let cfg = ModelConfig::tiny(8, 4);
    assert!(matches!(
        train(&tr, None, &cfg, &TrainHyper::default()),
        Err(ModelError::ShapeMismatch(_))
    ));
}

#[test]
fn weights_round_trip_and_detect_damage() {
    let tr = linear_scan("a", 80, 1);
    let cfg = ModelConfig::tiny(8, 3);
    let hyper = TrainHyper {
        epochs: 2,
        batch_size: 16,
        ..TrainHyper::default()
    };
    let state = train(&tr, None, &cfg, &hyper).unwrap();
    let mut buf = Vec::new();
    write_weights(&state, &mut buf).unwrap();
    let back = read_weights(&buf[..]).unwrap();
    assert_eq!(back.network, state.network);
    assert_eq!(
        (back.m.clone(), back.v.clone(), back.step),
        (state.m.clone(), state.v.clone(), state.step)
    );
    let x = batch_input(&tr, &[0, 5, 9]);
    assert_eq!(
        back.network.forward(&x).unwrap(),
        state.network.forward(&x).unwrap()
    );

    let truncated = &buf[..buf.len() - 9];
    assert!(matches!(
        read_weights(truncated),
        Err(ModelError::ChecksumMismatch)
    ));
    let mut flipped = buf.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x10;
    assert!(matches!(
        read_weights(&flipped[..]),
        Err(ModelError::ChecksumMismatch)
    ));

    let wrong = roi("a", 100, 5, 0);
    let err = predict_series(
        &back.network,
        &wrong,
        AlignmentMode::Middle,
        &ScanNorm::identity(5),
    );
    assert!(matches!(err, Err(ModelError::ShapeMismatch(_))));
}

#[test]
fn series_prediction_covers_interior_volumes() {
    let r = roi("s", 478, 4, 9);
    let cfg = ModelConfig::tiny(64, 4);
    let mut net = Network::new(&cfg).unwrap();
    // All-zero weights leave only the output bias.
    let bias = net.params_mut().pop().unwrap();
    bias.data_mut()[0] = 0.75;
    let norm = ScanNorm::fit_inputs(&r.data).with_target(2.0, 0.5);
    let rec = predict_series(&net, &r, AlignmentMode::Middle, &norm).unwrap();
    assert_eq!(rec.covered(), 32..446);
    assert_eq!(rec.values.len(), 414);
    assert!(rec.values.iter().all(|&v| (v - 2.375).abs() < 1e-12));
    assert_eq!(rec.value_at(31), None);
    assert!(rec.value_at(445).is_some());

    let mut text = Vec::new();
    rec.write_text(&mut text).unwrap();
    let back = rvrecon::model::Reconstruction::read_text(&text[..]).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn series_prediction_matches_batched_forward() {
    let r = roi("s", 150, 3, 2);
    let t: Vec<f64> = (0..150).map(|k| (k as f64 * 0.1).sin()).collect();
    let ds = build_windows(&r, &target("s", t), 16, AlignmentMode::End).unwrap();
    let (z, stats) = normalize(&ds, None).unwrap();
    let state = init_parameters(&ModelConfig::default_architecture(16, 3), 4).unwrap();
    let batched = stats
        .denormalize("s", &predict_dataset(&state.network, &z, 50).unwrap())
        .unwrap();
    let rec = predict_series(
        &state.network,
        &r,
        AlignmentMode::End,
        stats.get("s").unwrap(),
    )
    .unwrap();
    assert_eq!(rec.start_index, 15);
    for (a, b) in rec.values.iter().zip(&batched) {
        assert!((a - b).abs() < 1e-12);
    }
}
