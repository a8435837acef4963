use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use handsynth::discriminator::{auc, build_corpus, train, train_samples, Discriminator, TrainConfig, TrainSample};
use handsynth::hand::{HandPose, Side};
use handsynth::limits::JointLimits;
use handsynth::synthesis::AugmentationConfig;

type Corpus = (Vec<[f64; 45]>, Vec<TrainSample>);

fn corpus(seed: u64, n: usize) -> Corpus {
    let cfg = TrainConfig {
        natural_samples: n,
        perturbed_samples: n,
        ..TrainConfig::default()
    };
    build_corpus(&cfg, &AugmentationConfig::default(), &JointLimits::default(), &mut ChaCha8Rng::seed_from_u64(seed))
}

fn trained() -> &'static Discriminator {
    static NET: OnceLock<Discriminator> = OnceLock::new();
    NET.get_or_init(|| {
        let (natural, perturbed) = corpus(1, 2000);
        let mut net = Discriminator::default_architecture(2);
        let curve = train(&mut net, &natural, &perturbed, &TrainConfig::default(), 3).unwrap();
        assert!(curve.last().unwrap() < &curve[0]);
        net
    })
}

#[test]
fn held_out_naturals_outrank_heavily_offset_poses() {
    let net = trained();
    let (natural, perturbed) = corpus(77, 500);
    let pos = net.predict_batch(&natural);
    let mut by_label = perturbed.clone();
    by_label.sort_by(|a, b| a.label.total_cmp(&b.label));
    let heavy: Vec<[f64; 45]> = by_label[..250].iter().map(|s| s.pose).collect();
    let a = auc(&pos, &net.predict_batch(&heavy));
    assert!(a >= 0.9, "held-out AUC {a}");
}

#[test]
fn t_pose_reads_as_natural() {
    let d = trained().predict(&HandPose::t_pose(Side::Right).to_vector());
    assert!(d > 0.5, "D(T-pose) = {d}");
}

#[test]
fn shuffled_labels_cannot_be_separated() {
    let (natural, perturbed) = corpus(5, 600);
    let mut labels: Vec<f64> = (0..natural.len() + perturbed.len()).map(|i| (i % 2) as f64).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(6));
    let samples: Vec<TrainSample> = natural
        .iter()
        .copied()
        .chain(perturbed.iter().map(|s| s.pose))
        .zip(labels)
        .map(|(pose, label)| TrainSample { pose, label })
        .collect();
    let mut net = Discriminator::default_architecture(7);
    let cfg = TrainConfig {
        epochs: 15,
        ..TrainConfig::default()
    };
    train_samples(&mut net, &samples, &cfg, 8).unwrap();
    let (hn, hp) = corpus(9, 400);
    let p: Vec<[f64; 45]> = hp.iter().map(|s| s.pose).collect();
    let a = auc(&net.predict_batch(&hn), &net.predict_batch(&p));
    assert!((a - 0.5).abs() <= 0.1, "AUC {a}");
}

#[test]
fn duplicated_corpus_has_the_same_initial_loss() {
    let (natural, perturbed) = corpus(11, 100);
    let net = Discriminator::default_architecture(12);
    let samples: Vec<TrainSample> =
        natural.iter().map(|&pose| TrainSample { pose, label: 1.0 }).chain(perturbed).collect();
    let xs: Vec<[f64; 45]> = samples.iter().map(|s| s.pose).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.label).collect();
    let twice_x: Vec<[f64; 45]> = xs.iter().chain(&xs).copied().collect();
    let twice_y: Vec<f64> = ys.iter().chain(&ys).copied().collect();
    assert!((net.mse(&xs, &ys) - net.mse(&twice_x, &twice_y)).abs() < 1e-12);
}
