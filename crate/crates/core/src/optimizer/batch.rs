use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{optimize_pair, validity_filter, Pairing, Schedule, Trace, ValidityReport};
use crate::error::{Error, Result};
use crate::hand::PosePair;
use crate::limits::JointLimits;
use crate::losses::{AnchorSets, LossTerms, Objective};
use crate::seeds::SeedPair;
use crate::synthesis::{augment_pose, AugmentationConfig};

/// One augmented initial pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchJob {
    pub seed_id: String,
    pub seed_index: usize,
    pub augmentation_index: usize,
    pub initial: PosePair,
}

/// Augments every seed with its own rng stream, so a seed's jobs do not depend
/// on how many seeds precede it.
pub fn generate_jobs(
    seeds: &[SeedPair],
    cfg: &AugmentationConfig,
    limits: &JointLimits,
    rng_seed: u64,
) -> Result<Vec<BatchJob>> {
    let mut jobs = Vec::with_capacity(seeds.len() * cfg.count);
    for (i, s) in seeds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(i as u64);
        for (a, initial) in augment_pose(&s.pair, cfg, limits, &mut rng)?.into_iter().enumerate() {
            jobs.push(BatchJob {
                seed_id: s.id.clone(),
                seed_index: i,
                augmentation_index: a,
                initial,
            });
        }
    }
    Ok(jobs)
}

#[derive(Debug, Clone, Serialize)]
pub struct JobOutcome {
    pub job: BatchJob,
    pub optimized: Option<PosePair>,
    pub final_terms: Option<LossTerms>,
    pub report: Option<ValidityReport>,
    /// Divergence or other per-job failure.
    pub error: Option<String>,
    #[serde(skip)]
    pub trace: Trace,
    #[serde(skip)]
    pub optimize_secs: f64,
    #[serde(skip)]
    pub filter_secs: f64,
}

impl JobOutcome {
    pub fn passed(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub jobs: usize,
    pub passed: usize,
    pub rejected: usize,
    pub diverged: usize,
    /// Pass rate; absent for an empty batch.
    pub yield_rate: Option<f64>,
}

impl BatchSummary {
    pub fn from_outcomes(outcomes: &[JobOutcome]) -> Self {
        let passed = outcomes.iter().filter(|o| o.passed()).count();
        let diverged = outcomes.iter().filter(|o| o.error.is_some()).count();
        Self {
            jobs: outcomes.len(),
            passed,
            rejected: outcomes.len() - passed - diverged,
            diverged,
            yield_rate: (!outcomes.is_empty()).then(|| passed as f64 / outcomes.len() as f64),
        }
    }
}

/// Optimizes every job in parallel and, given a tolerance in meters, filters
/// it; outcomes keep job order. Divergence of one job is recorded in its
/// outcome and does not stop the batch.
pub fn run_batch(
    jobs: &[BatchJob],
    objective: &Objective,
    anchors: &AnchorSets,
    schedule: &Schedule,
    tolerance: Option<f64>,
) -> Result<Vec<JobOutcome>> {
    schedule.validate()?;
    if let Some(t) = tolerance {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Config(format!("penetration tolerance {t} must be non-negative")));
        }
    }
    Ok(jobs
        .par_iter()
        .map(|job| {
            let t0 = Instant::now();
            let result = optimize_pair(&job.initial, objective, Pairing::Anchors(anchors), schedule);
            let optimize_secs = t0.elapsed().as_secs_f64();
            match result {
                Ok(o) => {
                    let t1 = Instant::now();
                    let report = tolerance.map(|t| validity_filter(&o.pair, objective.models, objective.limits, t));
                    JobOutcome {
                        job: job.clone(),
                        final_terms: o.trace.last().map(|r| r.terms),
                        optimized: Some(o.pair),
                        report,
                        error: None,
                        trace: o.trace,
                        optimize_secs,
                        filter_secs: t1.elapsed().as_secs_f64(),
                    }
                }
                Err(e) => {
                    let trace = match &e {
                        Error::Divergence { trace, .. } => (**trace).clone(),
                        _ => Trace::default(),
                    };
                    JobOutcome {
                        job: job.clone(),
                        optimized: None,
                        final_terms: None,
                        report: None,
                        error: Some(e.to_string()),
                        trace,
                        optimize_secs,
                        filter_secs: 0.0,
                    }
                }
            }
        })
        .collect())
}
