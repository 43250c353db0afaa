use strurw::csbm::{sample_domain_pair, ShiftSpec};
use strurw::graph::DomainPair;
use strurw::reweight::{PseudoLabelPolicy, StruRwSchedule};
use strurw::shift::BlockMatrix;
use strurw::train::{run_algorithm1, GrlConfig, Pipeline, TrainConfig};
use strurw::Error;

fn pair(seed: u64) -> DomainPair {
    let mut spec = ShiftSpec::three_class_benchmark(0.016);
    for side in [&mut spec.source, &mut spec.target] {
        side.n_per_class = vec![150; 3];
    }
    spec.source.block = BlockMatrix::planted(3, 0.1, 0.08).unwrap();
    spec.target.block = BlockMatrix::planted(3, 0.1, 0.01).unwrap();
    sample_domain_pair(&spec, 0.2, seed).unwrap()
}

fn config(pipeline: Pipeline, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        seed: 3,
        ..TrainConfig::for_pipeline(pipeline)
    }
}

#[test]
fn lambda_zero_reproduces_the_baseline_exactly() {
    let p = pair(0);
    for pipeline in [Pipeline::Erm, Pipeline::Adv, Pipeline::Mixup] {
        let base = config(pipeline, 30);
        let noop = TrainConfig {
            strurw: Some(StruRwSchedule {
                start_epoch: 5,
                period: 2,
                lambda: 0.0,
                policy: PseudoLabelPolicy::ValTruePlusPseudo,
            }),
            ..base.clone()
        };
        let a = run_algorithm1(&p, &base).unwrap();
        let b = run_algorithm1(&p, &noop).unwrap();
        assert_eq!(a.metrics.epochs, b.metrics.epochs, "{pipeline:?}");
        assert_eq!(a.model.params, b.model.params, "{pipeline:?}");
        let table = b.metrics.final_weights.unwrap();
        assert!(table.weights.iter().flatten().all(|&w| w == 1.0));
    }
}

#[test]
fn adversarial_run_without_reversal_tracks_erm() {
    let p = pair(1);
    let erm = run_algorithm1(&p, &config(Pipeline::Erm, 25)).unwrap();
    let adv = TrainConfig {
        grl: GrlConfig {
            scale: 1.0,
            alpha_max: 0.0,
        },
        ..config(Pipeline::Adv, 25)
    };
    let adv = run_algorithm1(&p, &adv).unwrap();
    for (e, a) in erm.metrics.epochs.iter().zip(&adv.metrics.epochs) {
        assert_eq!((e.src_acc, e.tgt_val_acc, e.tgt_test_acc, e.loss_erm), (a.src_acc, a.tgt_val_acc, a.tgt_test_acc, a.loss_erm));
        assert!(a.loss_adv.unwrap() > 0.0);
    }
    let n = erm.model.params.len() - 4;
    assert_eq!(erm.model.params[..n], adv.model.params[..n]);
}

#[test]
fn reweighting_reduces_estimated_shift() {
    let p = pair(2);
    let run = TrainConfig {
        strurw: Some(StruRwSchedule {
            start_epoch: 20,
            period: 5,
            lambda: 1.0,
            policy: PseudoLabelPolicy::ValTruePlusPseudo,
        }),
        ..config(Pipeline::Erm, 60)
    };
    let out = run_algorithm1(&p, &run).unwrap();
    let table = out.metrics.final_weights.unwrap();
    // Inter-class source edges are denser than target ones, so their messages shrink.
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                assert!(table.get(i, j) > 0.5, "{:?}", table.weights);
            } else {
                assert!(table.get(i, j) < 0.5, "{:?}", table.weights);
            }
        }
    }
    assert_eq!(table.provenance.epoch, Some(55));
}

#[test]
fn eval_interval_thins_the_log() {
    let p = pair(3);
    let run = TrainConfig {
        eval_every: 4,
        ..config(Pipeline::Mixup, 10)
    };
    let out = run_algorithm1(&p, &run).unwrap();
    let epochs: Vec<usize> = out.metrics.epochs.iter().map(|e| e.epoch).collect();
    assert_eq!(epochs, vec![0, 4, 8, 9]);
}

#[test]
fn runaway_learning_rate_reports_divergence() {
    let p = pair(4);
    let run = TrainConfig {
        lr: 1e300,
        ..config(Pipeline::Erm, 5)
    };
    match run_algorithm1(&p, &run) {
        Err(Error::Diverged { .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}
