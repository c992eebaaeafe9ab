use tskicfnn::ndarray::{Array1, Array2};
use tskicfnn::trainer::{train_observed, TrainEvent};
use tskicfnn::{train, Dataset, Mode, Model, TrainConfig};

fn wave(rows: usize) -> Dataset {
    let x = Array2::from_shape_fn((rows, 2), |(k, j)| {
        let t = k as f64 / rows as f64;
        if j == 0 {
            t
        } else {
            (3.0 * t).cos() * 0.5 + 0.5
        }
    });
    let y = Array1::from_shape_fn(rows, |k| (x[[k, 0]] * 4.0).sin() * 0.3 + x[[k, 1]] * 0.5);
    Dataset::new("wave", x, y).unwrap()
}

fn quick(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        iter_max: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn each_epoch_solves_targets_once_before_premise_steps() {
    let data = wave(40);
    let model = Model::init_with_ranges(&data.input_ranges(), 3, 1).unwrap();
    let mut events = Vec::new();
    train_observed(model, &data, &quick(Mode::Stepwise), &mut |e| {
        events.push(e.clone())
    })
    .unwrap();

    let mut epoch = 0;
    let mut phase = 0; // 0: expecting targets, 1: premise, 2: consequent
    for e in &events {
        match e {
            TrainEvent::TargetsSolved { epoch: k } => {
                assert_eq!(phase, 0, "targets solved twice in epoch {k}");
                assert_eq!(*k, epoch + 1);
                epoch = *k;
                phase = 1;
            }
            TrainEvent::PremiseStep { epoch: k, .. } => {
                assert_eq!(*k, epoch);
                assert_eq!(phase, 1, "premise step outside the premise phase");
            }
            TrainEvent::ConsequentStep { epoch: k, .. } => {
                assert_eq!(*k, epoch);
                assert!(phase >= 1);
                phase = 2;
            }
            TrainEvent::EpochDone(record) => {
                assert_eq!(record.epoch, epoch);
                assert_eq!(phase, 2);
                phase = 0;
            }
        }
    }
    assert!(epoch >= 1);
}

#[test]
fn backprop_emits_no_premise_phase() {
    let data = wave(30);
    let model = Model::init_with_ranges(&data.input_ranges(), 2, 4).unwrap();
    let mut events = Vec::new();
    let (_, report) = train_observed(model, &data, &quick(Mode::Backprop), &mut |e| {
        events.push(e.clone())
    })
    .unwrap();
    assert!(events.iter().all(|e| !matches!(
        e,
        TrainEvent::TargetsSolved { .. } | TrainEvent::PremiseStep { .. }
    )));
    assert!(report
        .history
        .iter()
        .all(|h| h.j1.is_none() && h.j2.is_none()));
}

#[test]
fn huge_epsilon_runs_one_epoch() {
    let data = wave(30);
    for mode in [Mode::Stepwise, Mode::Backprop] {
        let model = Model::init_with_ranges(&data.input_ranges(), 2, 2).unwrap();
        let cfg = TrainConfig {
            epsilon: 1e12,
            ..quick(mode)
        };
        let (_, report) = train(model, &data, &cfg).unwrap();
        assert_eq!(report.epochs_run, 1, "{mode}");
    }
}

#[test]
fn consequent_phase_decreases_output_error_at_small_rate() {
    let data = wave(50);
    let model = Model::init_with_ranges(&data.input_ranges(), 2, 9).unwrap();
    let cfg = TrainConfig {
        eta0: 1e-4,
        delta_e: 1e-12,
        tprime_max: 100,
        iter_max: 2,
        ..TrainConfig::default()
    };
    let mut steps: Vec<(usize, f64)> = Vec::new();
    train_observed(model, &data, &cfg, &mut |e| {
        if let TrainEvent::ConsequentStep { epoch, mse, .. } = e {
            steps.push((*epoch, *mse));
        }
    })
    .unwrap();
    assert!(steps.len() > 10);
    for pair in steps.windows(2) {
        if pair[0].0 == pair[1].0 {
            assert!(pair[1].1 <= pair[0].1 + 1e-15, "{pair:?}");
        }
    }
}

#[test]
fn returned_model_has_lowest_recorded_error() {
    let data = wave(40);
    for mode in [Mode::Stepwise, Mode::Backprop] {
        let model = Model::init_with_ranges(&data.input_ranges(), 2, 5).unwrap();
        let (best, report) = train(model, &data, &quick(mode)).unwrap();
        let lowest = report
            .history
            .iter()
            .min_by(|a, b| a.j3.total_cmp(&b.j3))
            .unwrap();
        assert_eq!(report.best_epoch, lowest.epoch);
        assert!(report.best_epoch > 0);
        let predictions = best.predict_batch(data.inputs.view()).unwrap();
        let rmse = tskicfnn::rmse(&predictions, data.targets.as_slice().unwrap()).unwrap();
        assert!((rmse - lowest.train_rmse).abs() < 1e-12);
        assert!((rmse - report.train_rmse).abs() < 1e-12);
    }
}

#[test]
fn shape_regulator_stays_in_bounds() {
    let data = wave(40);
    let model = Model::init_with_ranges(&data.input_ranges(), 3, 6).unwrap();
    let cfg = TrainConfig {
        eta0: 0.05,
        ..quick(Mode::Stepwise)
    };
    let (trained, _) = train(model, &data, &cfg).unwrap();
    for rule in trained.rules() {
        assert!((0.1..=10.0).contains(&rule.shape_regulator));
    }
}

#[test]
fn reports_are_reproducible() {
    let data = wave(40);
    for mode in [Mode::Stepwise, Mode::Backprop] {
        let run = || {
            let model = Model::init_with_ranges(&data.input_ranges(), 2, 8).unwrap();
            train(model, &data, &quick(mode)).unwrap()
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(m1.to_json().unwrap(), m2.to_json().unwrap());
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }
}

#[test]
fn rejects_mismatched_data() {
    let data = wave(10);
    let model = Model::init_random(3, 2, 0).unwrap();
    assert!(matches!(
        train(model, &data, &TrainConfig::default()),
        Err(tskicfnn::Error::Dimension {
            expected: 3,
            got: 2
        })
    ));
    let model = Model::init_random(2, 2, 0).unwrap();
    let bad = TrainConfig {
        alpha: 1.5,
        ..TrainConfig::default()
    };
    assert!(matches!(
        train(model, &data, &bad),
        Err(tskicfnn::Error::Config(_))
    ));
}

#[test]
fn initial_model_is_kept_when_every_epoch_is_worse() {
    let data = wave(40);
    let model = Model::init_with_ranges(&data.input_ranges(), 2, 5).unwrap();
    let before = model.predict_batch(data.inputs.view()).unwrap();
    let cfg = TrainConfig {
        eta0: 10.0,
        iter_max: 3,
        ..quick(Mode::Backprop)
    };
    match train(model.clone(), &data, &cfg) {
        Ok((best, report)) => {
            let initial = tskicfnn::rmse(&before, data.targets.as_slice().unwrap()).unwrap();
            if report.history.iter().all(|r| r.train_rmse > initial) {
                assert_eq!(report.best_epoch, 0);
                assert_eq!(best, model);
            }
            assert!(report.train_rmse <= initial + 1e-12);
        }
        Err(e) => assert!(matches!(e, tskicfnn::Error::NonFinite { .. }), "{e}"),
    }
}
