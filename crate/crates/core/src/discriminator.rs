//! Naturalness prior: a small MLP scoring single-hand articulations in (0, 1).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::{HandPose, Side, POSE_DIM};
use crate::limits::JointLimits;
use crate::seeds::jittered_gesture;
use crate::synthesis::{augment_hand, AugmentationConfig};

pub const LAYER_SIZES: [usize; 5] = [POSE_DIM, 128, 128, 64, 1];
pub const LEAKY_SLOPE: f64 = 0.01;
const MAGIC: &[u8; 4] = b"HSDN";
const FORMAT_VERSION: u32 = 1;

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_deriv(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Multilayer perceptron with leaky-ReLU hidden layers and a logistic output.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub sizes: Vec<usize>,
    /// `weights[l]` is `sizes[l+1] × sizes[l]`.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone)]
pub struct ParamGrad {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

struct Cache {
    /// Pre-activations per layer.
    z: Vec<DMatrix<f64>>,
    /// Activations, `a[0]` is the input.
    a: Vec<DMatrix<f64>>,
}

impl Discriminator {
    /// He-uniform initialization from `seed`.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes[0] != POSE_DIM || *sizes.last().unwrap() != 1 || sizes.contains(&0) {
            return Err(Error::Config(format!(
                "discriminator layers must run from {POSE_DIM} inputs to 1 output, got {sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let bound = (6.0 / w[0] as f64).sqrt();
            weights.push(DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)));
            biases.push(DVector::zeros(w[1]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn default_architecture(seed: u64) -> Self {
        Self::new(&LAYER_SIZES, seed).expect("built-in architecture is valid")
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn forward(&self, x: DMatrix<f64>) -> Cache {
        let n = self.weights.len();
        let mut z = Vec::with_capacity(n);
        let mut a = vec![x];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut zl = w * &a[l];
            for mut col in zl.column_iter_mut() {
                col += b;
            }
            let al = if l + 1 == n { zl.map(sigmoid) } else { zl.map(leaky) };
            z.push(zl);
            a.push(al);
        }
        Cache { z, a }
    }

    /// Backward pass from `d out` (one row, one column per sample).
    fn backward(&self, cache: &Cache, dout: DMatrix<f64>) -> (ParamGrad, DMatrix<f64>) {
        let n = self.weights.len();
        let out = &cache.a[n];
        let mut delta = dout.component_mul(&out.map(|s| s * (1.0 - s)));
        let mut gw = vec![DMatrix::zeros(0, 0); n];
        let mut gb = vec![DVector::zeros(0); n];
        for l in (0..n).rev() {
            gw[l] = &delta * cache.a[l].transpose();
            gb[l] = delta.column_sum();
            let da = self.weights[l].transpose() * &delta;
            if l == 0 {
                return (
                    ParamGrad {
                        weights: gw,
                        biases: gb,
                    },
                    da,
                );
            }
            delta = da.component_mul(&cache.z[l - 1].map(leaky_deriv));
        }
        unreachable!("network has at least one layer")
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let c = self.forward(DMatrix::from_column_slice(x.len(), 1, x));
        c.a[self.weights.len()][(0, 0)]
    }

    pub fn predict_batch(&self, xs: &[[f64; POSE_DIM]]) -> Vec<f64> {
        if xs.is_empty() {
            return Vec::new();
        }
        let c = self.forward(batch_matrix(xs));
        c.a[self.weights.len()].iter().copied().collect()
    }

    /// `𝒟(x)` and its gradient with respect to `x`.
    pub fn input_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let c = self.forward(DMatrix::from_column_slice(x.len(), 1, x));
        let d = c.a[self.weights.len()][(0, 0)];
        let (_, dx) = self.backward(&c, DMatrix::from_element(1, 1, 1.0));
        (d, dx.iter().copied().collect())
    }

    /// Mean squared error to `targets` and its parameter gradient.
    pub fn mse_gradient(&self, xs: &[[f64; POSE_DIM]], targets: &[f64]) -> (f64, ParamGrad) {
        let c = self.forward(batch_matrix(xs));
        let out = &c.a[self.weights.len()];
        let m = xs.len() as f64;
        let err = DMatrix::from_fn(1, xs.len(), |_, i| out[(0, i)] - targets[i]);
        let loss = err.iter().map(|e| e * e).sum::<f64>() / m;
        let (g, _) = self.backward(&c, err * (2.0 / m));
        (loss, g)
    }

    pub fn mse(&self, xs: &[[f64; POSE_DIM]], targets: &[f64]) -> f64 {
        self.predict_batch(xs)
            .iter()
            .zip(targets)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / xs.len() as f64
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for (wm, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..wm.nrows() {
                for c in 0..wm.ncols() {
                    w.write_all(&wm[(r, c)].to_le_bytes())?;
                }
            }
            for v in b.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_from(mut r: impl Read) -> std::result::Result<Self, String> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| e.to_string())?;
        if &magic != MAGIC {
            return Err("not a discriminator parameter file".into());
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> std::result::Result<u32, String> {
            r.read_exact(&mut u32_buf).map_err(|e| e.to_string())?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let n = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&n) {
            return Err(format!("implausible layer count {n}"));
        }
        let sizes = (0..n)
            .map(|_| read_u32(&mut r).map(|s| s as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut net = Self::new(&sizes, 0).map_err(|e| e.to_string())?;
        let mut f = [0u8; 8];
        let mut read_f64 = |r: &mut dyn Read| -> std::result::Result<f64, String> {
            r.read_exact(&mut f).map_err(|e| format!("truncated parameters: {e}"))?;
            let v = f64::from_le_bytes(f);
            if v.is_finite() {
                Ok(v)
            } else {
                Err("non-finite parameter".into())
            }
        };
        for l in 0..net.weights.len() {
            let (rows, cols) = net.weights[l].shape();
            for i in 0..rows {
                for j in 0..cols {
                    net.weights[l][(i, j)] = read_f64(&mut r)?;
                }
            }
            for i in 0..rows {
                net.biases[l][i] = read_f64(&mut r)?;
            }
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|e| e.to_string())?;
        if !rest.is_empty() {
            return Err(format!("{} trailing bytes", rest.len()));
        }
        Ok(net)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(bytes.as_slice()).map_err(|reason| Error::format(path, reason))
    }
}

fn batch_matrix(xs: &[[f64; POSE_DIM]]) -> DMatrix<f64> {
    DMatrix::from_fn(POSE_DIM, xs.len(), |r, c| xs[c][r])
}

/// `(𝒟(Θ) − 1)²` and its gradient with respect to the 45 angles. Left hands
/// share the right-hand network: a left pose's angles already describe the
/// mirrored right-hand articulation.
pub fn adversarial_loss(net: &Discriminator, pose: &HandPose) -> (f64, [f64; POSE_DIM]) {
    let (d, dx) = net.input_gradient(&pose.to_vector());
    let mut g = [0.0; POSE_DIM];
    for (gi, di) in g.iter_mut().zip(&dx) {
        *gi = 2.0 * (d - 1.0) * di;
    }
    ((d - 1.0) * (d - 1.0), g)
}

/// `max(0, 1 − ‖offsets‖ / ρ_max)`.
pub fn label_probability(offsets: &[f64], rho_max: f64) -> f64 {
    let n = offsets.iter().map(|o| o * o).sum::<f64>().sqrt();
    (1.0 - n / rho_max).max(0.0)
}

/// Area under the ROC curve of scores for positives versus negatives, ties counted half.
pub fn auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSample {
    pub pose: [f64; POSE_DIM],
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub natural_samples: usize,
    pub perturbed_samples: usize,
    /// Jitter of natural samples around the gesture library, degrees.
    pub natural_jitter_deg: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            natural_samples: 2000,
            perturbed_samples: 2000,
            natural_jitter_deg: 5.0,
            epochs: 40,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.natural_samples == 0 || self.perturbed_samples == 0 {
            return Err(Error::Config("discriminator corpora must be non-empty".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("discriminator epochs, batch size and learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Natural poses (gesture library with small jitter) and perturbed poses
/// (augmentation offsets on top of natural ones, labelled by offset size).
pub fn build_corpus(
    cfg: &TrainConfig,
    aug: &AugmentationConfig,
    limits: &JointLimits,
    rng: &mut impl Rng,
) -> (Vec<[f64; POSE_DIM]>, Vec<TrainSample>) {
    let rho = aug.max_offset_norm();
    let natural = (0..cfg.natural_samples)
        .map(|_| jittered_gesture(rng, Side::Right, cfg.natural_jitter_deg, limits).to_vector())
        .collect();
    let perturbed = (0..cfg.perturbed_samples)
        .map(|_| {
            let base = jittered_gesture(rng, Side::Right, cfg.natural_jitter_deg, limits);
            let (p, offsets) = augment_hand(&base, aug, limits, rng);
            TrainSample {
                pose: p.to_vector(),
                label: label_probability(&offsets, rho),
            }
        })
        .collect();
    (natural, perturbed)
}

/// Mini-batch Adam on the mean squared error to the targets: 1 for natural
/// samples, the soft label for perturbed ones. Returns the mean loss of each epoch.
pub fn train(
    net: &mut Discriminator,
    natural: &[[f64; POSE_DIM]],
    perturbed: &[TrainSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if natural.is_empty() || perturbed.is_empty() {
        return Err(Error::Config("discriminator corpora must be non-empty".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("discriminator epochs, batch size and learning rate must be positive".into()));
    }
    let samples: Vec<TrainSample> = natural
        .iter()
        .map(|&pose| TrainSample { pose, label: 1.0 })
        .chain(perturbed.iter().copied())
        .collect();
    train_samples(net, &samples, cfg, seed)
}

/// [`train`] on an already-labelled sample list.
pub fn train_samples(
    net: &mut Discriminator,
    samples: &[TrainSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Config("discriminator corpus is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut mw: Vec<DMatrix<f64>> = net.weights.iter().map(|w| w.map(|_| 0.0)).collect();
    let mut vw = mw.clone();
    let mut mb: Vec<DVector<f64>> = net.biases.iter().map(|b| b.map(|_| 0.0)).collect();
    let mut vb = mb.clone();
    let mut t = 0i32;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<[f64; POSE_DIM]> = chunk.iter().map(|&i| samples[i].pose).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| samples[i].label).collect();
            let (loss, g) = net.mse_gradient(&xs, &ys);
            total += loss * chunk.len() as f64;
            t += 1;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            for l in 0..net.weights.len() {
                mw[l] = &mw[l] * b1 + &g.weights[l] * (1.0 - b1);
                vw[l] = &vw[l] * b2 + g.weights[l].map(|x| x * x) * (1.0 - b2);
                mb[l] = &mb[l] * b1 + &g.biases[l] * (1.0 - b1);
                vb[l] = &vb[l] * b2 + g.biases[l].map(|x| x * x) * (1.0 - b2);
                let lr = cfg.learning_rate;
                net.weights[l] -= mw[l].zip_map(&vw[l], |m, v| lr * (m / c1) / ((v / c2).sqrt() + eps));
                net.biases[l] -= mb[l].zip_map(&vb[l], |m, v| lr * (m / c1) / ((v / c2).sqrt() + eps));
            }
        }
        curve.push(total / samples.len() as f64);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn small_net() -> Discriminator {
        Discriminator::new(&[POSE_DIM, 8, 6, 1], 3).unwrap()
    }

    #[test]
    fn output_in_open_unit_interval() {
        let net = Discriminator::default_architecture(1);
        assert_eq!(net.parameter_count(), 45 * 128 + 128 + 128 * 128 + 128 + 128 * 64 + 64 + 64 + 1);
        for s in [0.0, 1.0, -3.0, 2.5] {
            let d = net.predict(&[s; POSE_DIM]);
            assert!(d > 0.0 && d < 1.0);
        }
        let x = [0.3; POSE_DIM];
        assert_eq!(net.predict(&x), net.predict(&x));
    }

    #[test]
    fn adversarial_values() {
        let mut net = small_net();
        for w in net.weights.iter_mut() {
            w.fill(0.0);
        }
        let (l, g) = adversarial_loss(&net, &HandPose::t_pose(Side::Right));
        assert_eq!(l, 0.25);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn label_probability_endpoints() {
        let aug = AugmentationConfig::default();
        let rho = aug.max_offset_norm();
        assert_eq!(label_probability(&[0.0; POSE_DIM], rho), 1.0);
        let mut max = [0.0; POSE_DIM];
        for (slot, m) in max.iter_mut().enumerate() {
            if slot % 3 == 0 {
                *m = 90f64.to_radians();
            } else if slot % 9 == 1 {
                *m = 30f64.to_radians();
            }
        }
        assert!(label_probability(&max, rho).abs() < 1e-12);
    }

    #[test]
    fn auc_of_separated_and_tied_scores() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]), 1.0);
        assert_eq!(auc(&[0.1], &[0.9]), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.5]), 0.5);
    }

    #[test]
    fn file_round_trip_is_exact() {
        let net = small_net();
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"HSDN");
        assert_eq!(Discriminator::read_from(buf.as_slice()).unwrap(), net);
        assert!(Discriminator::read_from(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Discriminator::read_from(bad.as_slice()).is_err());
    }

    #[test]
    fn empty_corpus_is_a_configuration_error() {
        let mut net = small_net();
        let r = train(&mut net, &[], &[TrainSample { pose: [0.0; POSE_DIM], label: 0.0 }], &TrainConfig::default(), 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let net = small_net();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<[f64; POSE_DIM]> = (0..5)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.5..1.5)))
            .collect();
        let ys = [1.0, 0.0, 0.3, 0.7, 1.0];
        let (_, g) = net.mse_gradient(&xs, &ys);
        let h = 1e-6;
        for l in 0..net.weights.len() {
            let (rows, cols) = net.weights[l].shape();
            for (i, j) in [(0, 0), (rows - 1, cols - 1), (rows / 2, cols / 3)] {
                let mut a = net.clone();
                a.weights[l][(i, j)] += h;
                let mut b = net.clone();
                b.weights[l][(i, j)] -= h;
                let fd = (a.mse(&xs, &ys) - b.mse(&xs, &ys)) / (2.0 * h);
                let an = g.weights[l][(i, j)];
                assert!((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6) < 1e-5, "layer {l} ({i},{j}) {fd} {an}");
            }
            let mut a = net.clone();
            a.biases[l][0] += h;
            let mut b = net.clone();
            b.biases[l][0] -= h;
            let fd = (a.mse(&xs, &ys) - b.mse(&xs, &ys)) / (2.0 * h);
            let an = g.biases[l][0];
            assert!((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6) < 1e-5);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn input_gradient_matches_finite_differences(v in proptest::collection::vec(-1.5f64..1.5, POSE_DIM)) {
            let net = Discriminator::default_architecture(11);
            let pose = crate::hand::vector_to_pose(Side::Right, &v.clone().try_into().unwrap());
            let (_, g) = adversarial_loss(&net, &pose);
            let h = 1e-6;
            for k in 0..POSE_DIM {
                let mut a = v.clone();
                a[k] += h;
                let mut b = v.clone();
                b[k] -= h;
                let la = adversarial_loss(&net, &crate::hand::vector_to_pose(Side::Right, &a.try_into().unwrap())).0;
                let lb = adversarial_loss(&net, &crate::hand::vector_to_pose(Side::Right, &b.try_into().unwrap())).0;
                let fd = (la - lb) / (2.0 * h);
                let denom = fd.abs().max(g[k].abs()).max(1e-4);
                prop_assert!((fd - g[k]).abs() / denom < 1e-5, "slot {} fd {} an {}", k, fd, g[k]);
            }
        }

        #[test]
        fn doubling_offsets_never_raises_label(v in proptest::collection::vec(-1.0f64..1.0, POSE_DIM)) {
            let rho = AugmentationConfig::default().max_offset_norm();
            let doubled: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
            prop_assert!(label_probability(&doubled, rho) <= label_probability(&v, rho));
        }
    }
}
