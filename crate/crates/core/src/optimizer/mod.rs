//! Adam optimization of a pose pair against the composite objective.

mod batch;
mod filter;

pub use batch::{generate_jobs, run_batch, BatchJob, BatchSummary, JobOutcome};
pub use filter::{validity_filter, ValidityReport};

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::{apply_step, is_free_slot, PosePair, PosedHand, HAND_PARAMS, POSE_DIM};
use crate::limits::clamp_pose;
use crate::losses::{pairs_for_state, AnchorPair, AnchorSets, LossTerms, LossWeights, Objective, PAIR_PARAMS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub total_iters: usize,
    pub ramp_end: usize,
    pub rebuild_every: usize,
    pub initial_lr: f64,
    pub plateau_patience: usize,
    pub lr_decay: f64,
    /// Attraction weight, start and end of the ramp.
    pub w1: [f64; 2],
    /// Penetration weight, start and end of the ramp.
    pub w4: [f64; 2],
    pub w2: f64,
    pub w3: f64,
    /// Step-size multiplier for the root translations, start and end of the ramp.
    pub translation_lr_scale: [f64; 2],
    /// Project every angle into its range after the last step.
    pub project_limits_at_end: bool,
    /// Zero the Adam moments whenever anchor pairs are rebuilt.
    pub reset_moments_on_rebuild: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            total_iters: 215,
            ramp_end: 165,
            rebuild_every: 40,
            initial_lr: 0.01,
            plateau_patience: 20,
            lr_decay: 0.5,
            w1: [30.0, 600.0],
            w4: [10.0, 3.0],
            w2: 5.0,
            w3: 0.5,
            translation_lr_scale: [0.5, 0.05],
            project_limits_at_end: true,
            reset_moments_on_rebuild: true,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.ramp_end > self.total_iters {
            return Err(Error::Config(format!(
                "ramp_end {} exceeds total_iters {}",
                self.ramp_end, self.total_iters
            )));
        }
        if self.rebuild_every == 0 || self.plateau_patience == 0 {
            return Err(Error::Config("rebuild_every and plateau_patience must be positive".into()));
        }
        let positive = [
            self.initial_lr,
            self.lr_decay,
            self.translation_lr_scale[0],
            self.translation_lr_scale[1],
        ];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Config("learning rate, decay and translation scale must be positive".into()));
        }
        self.weights_at(0).validate()?;
        self.weights_at(self.ramp_end).validate()
    }

    /// Weights at `iter`: w1 and w4 interpolate linearly over `[0, ramp_end]`.
    pub fn weights_at(&self, iter: usize) -> LossWeights {
        let t = self.ramp_t(iter);
        LossWeights {
            w1: self.w1[0] + t * (self.w1[1] - self.w1[0]),
            w2: self.w2,
            w3: self.w3,
            w4: self.w4[0] + t * (self.w4[1] - self.w4[0]),
        }
    }

    /// Translation step multiplier at `iter`, on the same ramp as the weights.
    pub fn translation_scale_at(&self, iter: usize) -> f64 {
        let [a, b] = self.translation_lr_scale;
        let t = self.ramp_t(iter);
        a * (1.0 - t) + b * t
    }

    fn ramp_t(&self, iter: usize) -> f64 {
        if self.ramp_end == 0 {
            1.0
        } else {
            (iter as f64 / self.ramp_end as f64).min(1.0)
        }
    }

    /// Same schedule with all four weights held fixed.
    pub fn with_fixed_weights(mut self, w: LossWeights) -> Self {
        self.w1 = [w.w1, w.w1];
        self.w4 = [w.w4, w.w4];
        self.w2 = w.w2;
        self.w3 = w.w3;
        self
    }
}

/// Adam moments over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Updates the moments with `grad` and returns the step `−lr·m̂/(√v̂ + ε)`.
    pub fn step(&mut self, grad: &[f64], lr: f64) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        grad.iter()
            .enumerate()
            .map(|(i, &g)| {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                -lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lr: f64,
    pub anchor_pairs: usize,
    pub terms: LossTerms,
}

/// Per-iteration loss record. Row `i < total_iters` is the state before step
/// `i`; the last row is the returned state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn first(&self) -> Option<&TraceRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,L_p,L_A,L_a,L_adv,total,lr,anchor_pairs\n");
        for r in &self.rows {
            let t = &r.terms;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.iteration, t.penetration, t.attraction, t.anatomic, t.adversarial, t.total, r.lr, r.anchor_pairs
            );
        }
        s
    }

    /// Appends rows to a CSV file, writing the header when the file is new.
    pub fn append_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let exists = path.exists();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let csv = self.to_csv();
        let body = if exists { csv.split_once('\n').map_or("", |x| x.1) } else { &csv };
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// How anchor pairs are chosen during a run.
#[derive(Debug, Clone, Copy)]
pub enum Pairing<'a> {
    /// Rebuilt from the anchor sets at iteration 0 and every `rebuild_every`.
    Anchors(&'a AnchorSets),
    /// A fixed list for the whole run.
    Fixed(&'a [AnchorPair]),
}

fn rebuild(objective: &Objective, pairing: Pairing, pair: &PosePair) -> Vec<AnchorPair> {
    match pairing {
        Pairing::Fixed(p) => p.to_vec(),
        Pairing::Anchors(a) => {
            let r = PosedHand::new(&objective.models.right, &pair.right);
            let l = PosedHand::new(&objective.models.left, &pair.left);
            pairs_for_state(objective.models, a, &r, &l)
        }
    }
}

fn divergence(iteration: usize, reason: String, trace: Trace) -> Error {
    Error::Divergence {
        iteration,
        reason,
        trace: Box::new(trace),
    }
}

#[derive(Debug, Clone)]
pub struct Optimized {
    pub pair: PosePair,
    pub trace: Trace,
    /// Anchor pairs in effect at the end of the run.
    pub anchor_pairs: Vec<AnchorPair>,
}

/// Runs the schedule from `initial`. Twist and non-root splay never move;
/// root rotations stay orthonormal; with `project_limits_at_end` the result is
/// clamped into the joint ranges.
pub fn optimize_pair(
    initial: &PosePair,
    objective: &Objective,
    pairing: Pairing,
    schedule: &Schedule,
) -> Result<Optimized> {
    schedule.validate()?;
    let mut pair = initial.clone();
    let mut adam = AdamState::new(PAIR_PARAMS);
    let mut lr = schedule.initial_lr;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut trace = Trace::default();
    let mut anchor_pairs = Vec::new();

    for iter in 0..schedule.total_iters {
        if iter % schedule.rebuild_every == 0 {
            anchor_pairs = rebuild(objective, pairing, &pair);
            if iter > 0 && schedule.reset_moments_on_rebuild {
                adam = AdamState::new(PAIR_PARAMS);
            }
        }
        let w = schedule.weights_at(iter);
        let eval = objective.evaluate(&pair, &anchor_pairs, &w);
        trace.rows.push(TraceRow {
            iteration: iter,
            lr,
            anchor_pairs: anchor_pairs.len(),
            terms: eval.terms,
        });
        if !eval.terms.total.is_finite() {
            return Err(divergence(iter, format!("loss is {}", eval.terms.total), trace));
        }
        if let Some(i) = eval.grad.iter().position(|g| !g.is_finite()) {
            return Err(divergence(iter, format!("gradient entry {i} is {}", eval.grad[i]), trace));
        }

        if eval.terms.total < best {
            best = eval.terms.total;
            stale = 0;
        } else {
            stale += 1;
            if stale >= schedule.plateau_patience {
                lr *= schedule.lr_decay;
                stale = 0;
            }
        }

        let mut grad = eval.grad;
        for (i, g) in grad.iter_mut().enumerate() {
            let k = i % HAND_PARAMS;
            if k < POSE_DIM && !is_free_slot(k) {
                *g = 0.0;
            }
        }
        let mut step = adam.step(&grad, lr);
        let tscale = schedule.translation_scale_at(iter);
        for (i, s) in step.iter_mut().enumerate() {
            if i % HAND_PARAMS >= POSE_DIM + 3 {
                *s *= tscale;
            }
        }
        apply_step(&mut pair.right, &step[..HAND_PARAMS]);
        apply_step(&mut pair.left, &step[HAND_PARAMS..]);
    }

    if schedule.project_limits_at_end {
        pair.right = clamp_pose(&pair.right, objective.limits);
        pair.left = clamp_pose(&pair.left, objective.limits);
    }
    let w = schedule.weights_at(schedule.total_iters);
    let eval = objective.evaluate(&pair, &anchor_pairs, &w);
    trace.rows.push(TraceRow {
        iteration: schedule.total_iters,
        lr,
        anchor_pairs: anchor_pairs.len(),
        terms: eval.terms,
    });
    if !eval.terms.total.is_finite() {
        return Err(divergence(schedule.total_iters, format!("loss is {}", eval.terms.total), trace));
    }
    Ok(Optimized {
        pair,
        trace,
        anchor_pairs,
    })
}
