use std::path::Path;
use std::time::Instant;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use handsynth::config::PipelineConfig;
use handsynth::hand::{apply_step, HandPair, HandPose, PosePair, PosedHand, Side, HAND_PARAMS, NUM_KEYPOINTS};
use handsynth::limits::JointLimits;
use handsynth::losses::{
    max_penetration_depth, pairs_for_state, AnchorPair, AnchorSets, HandGrids, LossWeights, Objective, PAIR_PARAMS,
};
use handsynth::metrics::{mpjpe, mrrpe, pampjpe, EvalSample, RootJoint};
use handsynth::optimizer::{optimize_pair, Pairing, Schedule};
use handsynth::pipeline::{self, OptimizedRecord, RunOutput};
use handsynth::scene::{build_rig, read_annotations, RigConfig};
use handsynth::seeds::seed_library;
use handsynth::discriminator::Discriminator;

type Vec3 = Vector3<f64>;

struct Outcome {
    failures: usize,
}

impl Outcome {
    fn report(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn demo_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml")).unwrap();
    cfg.paths.out_dir = out.to_path_buf();
    cfg.workers = 4;
    cfg
}

fn mean_d(net: &Discriminator, records: &[OptimizedRecord]) -> f64 {
    let ds: Vec<f64> = records
        .iter()
        .filter_map(|r| r.optimized.as_ref())
        .flat_map(|p| [net.predict(&p.right.to_vector()), net.predict(&p.left.to_vector())])
        .collect();
    ds.iter().sum::<f64>() / ds.len() as f64
}

fn yield_and_contact(o: &mut Outcome, run: &RunOutput, secs: f64) {
    let y = run.report.summary.yield_rate.unwrap_or(0.0);
    o.report(
        "yield",
        y >= 0.85 && secs <= 1800.0,
        format!("{y:.4} of {} jobs (>= 0.85) in {secs:.1} s (<= 1800 s)", run.report.summary.jobs),
    );
    let (i, out) = (run.report.input_contact_rate, run.report.output_contact_rate);
    o.report(
        "contact creation",
        out > i,
        format!("outputs with an anchor pair within 5 mm {out:.4} > inputs {i:.4}"),
    );
}

/// Degrees, `[root bend, root splay, middle bend, end bend]` per finger.
const TABLE: [[[f64; 2]; 4]; 5] = [
    [[-20.0, 40.0], [-30.0, 30.0], [-8.0, 50.0], [-10.0, 100.0]],
    [[-25.0, 70.0], [-25.0, 15.0], [-4.0, 110.0], [-8.0, 90.0]],
    [[-25.0, 80.0], [-15.0, 15.0], [-7.0, 100.0], [-8.0, 90.0]],
    [[-25.0, 70.0], [-25.0, 15.0], [-10.0, 100.0], [-8.0, 90.0]],
    [[-22.0, 70.0], [-20.0, 30.0], [-8.0, 90.0], [-8.0, 90.0]],
];

fn within_table(pose: &HandPose) -> bool {
    let inside = |x: f64, r: [f64; 2]| r[0].to_radians() <= x && x <= r[1].to_radians();
    (0..5).all(|f| {
        let a = |s: usize| pose.angles[3 * f + s];
        let t = TABLE[f];
        inside(a(0)[0], t[0])
            && inside(a(0)[1], t[1])
            && inside(a(1)[0], t[2])
            && inside(a(2)[0], t[3])
            && a(1)[1] == 0.0
            && a(2)[1] == 0.0
            && (0..3).all(|s| a(s)[2] == 0.0)
    })
}

fn anatomic_validity(o: &mut Outcome, run: &RunOutput) {
    let bad = run
        .library
        .iter()
        .filter(|e| !(within_table(&e.pair.right) && within_table(&e.pair.left)))
        .count();
    o.report(
        "anatomic validity",
        bad == 0 && !run.library.is_empty(),
        format!("{bad} of {} library poses outside the joint table", run.library.len()),
    );
}

fn discriminator_effect(o: &mut Outcome, cfg: &PipelineConfig, models: &HandPair, run: &RunOutput, tmp: &Path) {
    let net = pipeline::load_discriminator(cfg.out_dir()).unwrap();
    let anchors = pipeline::load_anchors(cfg.out_dir(), models).unwrap();
    let jobs = pipeline::load_jobs(cfg.out_dir()).unwrap();
    let mut off = cfg.clone();
    off.paths.out_dir = tmp.join("w3_zero");
    off.schedule.w3 = 0.0;
    let (records, _) = pipeline::with_workers(4, || pipeline::optimize_stage(&off, models, &jobs, &anchors, &net))
        .unwrap()
        .unwrap();
    let on = mean_d(&net, &run.records);
    let zero = mean_d(&net, &records);
    o.report(
        "discriminator effect",
        on > zero,
        format!("mean D with w3 = {} is {on:.4} > {zero:.4} with w3 = 0", cfg.schedule.w3),
    );
}

fn center(models: &HandPair, h: &HandPose) -> Vec3 {
    let v = &PosedHand::new(models.get(h.side), h).vertices;
    v.iter().sum::<Vec3>() / v.len() as f64
}

/// Seed pairs pushed together until the deepest vertex is at least 4 mm inside.
fn interpenetrating_pairs(models: &HandPair, n: usize) -> Vec<PosePair> {
    seed_library(n, 99)
        .into_iter()
        .map(|s| {
            let mut p = s.pair;
            let dir = (center(models, &p.right) - center(models, &p.left)).normalize();
            for _ in 0..200 {
                let r = PosedHand::new(&models.right, &p.right);
                let l = PosedHand::new(&models.left, &p.left);
                if max_penetration_depth(models, [&r, &l]) >= 0.004 {
                    break;
                }
                p.left.root_translation += dir * 0.001;
            }
            p
        })
        .collect()
}

fn penetration_elimination(o: &mut Outcome, models: &HandPair, anchors: &AnchorSets, net: &Discriminator) {
    let grids = HandGrids::build(models, 32, 3).unwrap();
    let limits = JointLimits::default();
    let objective = Objective {
        models,
        grids: &grids,
        limits: &limits,
        discriminator: Some(net),
    };
    let schedule = Schedule::default();
    let pairs = interpenetrating_pairs(models, 20);
    let results: Vec<(f64, f64, f64)> = pipeline::with_workers(4, || {
        pairs
            .par_iter()
            .map(|p| {
                let r = PosedHand::new(&models.right, &p.right);
                let l = PosedHand::new(&models.left, &p.left);
                let before = max_penetration_depth(models, [&r, &l]);
                let opt = optimize_pair(p, &objective, Pairing::Anchors(anchors), &schedule).unwrap();
                let r = PosedHand::new(&models.right, &opt.pair.right);
                let l = PosedHand::new(&models.left, &opt.pair.left);
                let depth = max_penetration_depth(models, [&r, &l]);
                let lp0 = opt.trace.first().unwrap().terms.penetration;
                let lp1 = opt.trace.last().unwrap().terms.penetration;
                assert!(before >= 0.004 && lp0 > 0.0);
                (depth, lp1 / lp0, before)
            })
            .collect()
    })
    .unwrap();
    let ok = results.iter().filter(|r| r.0 <= 0.002).count();
    let mut ratios: Vec<f64> = results.iter().map(|r| r.1).collect();
    ratios.sort_by(f64::total_cmp);
    let median = 0.5 * (ratios[9] + ratios[10]);
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    o.report(
        "penetration elimination",
        ok * 10 >= 9 * results.len() && median < 0.05,
        format!(
            "{ok}/20 pairs at depth <= 2 mm (worst {:.2} mm), median L_p ratio {median:.2e} (< 0.05)",
            worst * 1e3
        ),
    );
}

fn fd_relative_error(f: impl Fn(&PosePair) -> f64, pair: &PosePair, grad: &[f64], h: f64) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for k in 0..PAIR_PARAMS {
        let shifted = |sign: f64| {
            let mut p = pair.clone();
            let mut step = vec![0.0; HAND_PARAMS];
            step[k % HAND_PARAMS] = sign * h;
            apply_step(if k < HAND_PARAMS { &mut p.right } else { &mut p.left }, &step);
            f(&p)
        };
        let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        diff += (fd - grad[k]).powi(2);
        norm += fd * fd;
    }
    diff.sqrt() / norm.sqrt()
}

fn gradient_suite(o: &mut Outcome, models: &HandPair, anchors: &AnchorSets, net: &Discriminator) {
    let t0 = Instant::now();
    let grids = HandGrids::build(models, 32, 3).unwrap();
    let limits = JointLimits::default();
    let objective = Objective {
        models,
        grids: &grids,
        limits: &limits,
        discriminator: Some(net),
    };

    let mut pair = interpenetrating_pairs(models, 3).swap_remove(2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for h in [&mut pair.right, &mut pair.left] {
        for a in h.angles.iter_mut() {
            a[0] += rng.random_range(-0.6..0.6);
        }
        h.angles[4][1] = 0.37;
    }
    // Generic point, off the SDF cell faces.
    let mut off = [0.0; HAND_PARAMS];
    off[HAND_PARAMS - 6..].copy_from_slice(&[0.013, -0.007, 0.011, 3.7e-4, -2.1e-4, 1.3e-4]);
    apply_step(&mut pair.left, &off);
    let r = PosedHand::new(&models.right, &pair.right);
    let l = PosedHand::new(&models.left, &pair.left);
    let pairs: Vec<AnchorPair> = pairs_for_state(models, anchors, &r, &l);

    let weights = |w1, w2, w3, w4| LossWeights { w1, w2, w3, w4 };
    let terms = [
        ("attraction", weights(1.0, 0.0, 0.0, 0.0), 1e-6, 1e-5),
        ("anatomic", weights(0.0, 1.0, 0.0, 0.0), 1e-6, 1e-5),
        ("adversarial", weights(0.0, 0.0, 1.0, 0.0), 1e-6, 1e-5),
        ("total objective", Schedule::default().weights_at(0), 1e-3, 1e-7),
    ];
    let mut worst = Vec::new();
    let mut pass = !pairs.is_empty();
    for (name, w, tol, h) in terms {
        let e = objective.evaluate(&pair, &pairs, &w);
        let err = fd_relative_error(|p| objective.value(p, &pairs, &w), &pair, &e.grad, h);
        pass &= err < tol && e.terms.total > 0.0;
        worst.push(format!("{name} {err:.1e} (< {tol:.0e})"));
    }

    let mut sdf_err: f64 = 0.0;
    for side in [Side::Right, Side::Left] {
        for g in &grids.get(side).grids {
            for _ in 0..50 {
                let cell = Vec3::from_fn(|_, _| rng.random_range(2..g.resolution - 3) as f64);
                let frac = Vec3::from_fn(|_, _| rng.random_range(0.1..0.9));
                let p = g.origin + (cell + frac).component_mul(&g.spacing);
                let (_, grad) = g.query(&p);
                let mut fd = Vec3::zeros();
                for a in 0..3 {
                    let h = 1e-4 * g.spacing[a];
                    let mut e = Vec3::zeros();
                    e[a] = h;
                    fd[a] = (g.query(&(p + e)).0 - g.query(&(p - e)).0) / (2.0 * h);
                }
                if fd.norm() > 0.0 {
                    sdf_err = sdf_err.max((fd - grad).norm() / fd.norm());
                }
            }
        }
    }
    pass &= sdf_err < 1e-6;
    worst.push(format!("trilinear SDF query {sdf_err:.1e} (< 1e-6)"));
    let secs = t0.elapsed().as_secs_f64();
    o.report(
        "gradient suite",
        pass && secs < 120.0,
        format!("{}; {} anchor pairs; {secs:.1} s (< 120 s)", worst.join(", "), pairs.len()),
    );
}

fn hand_mm(rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..NUM_KEYPOINTS)
        .map(|_| Vec3::from_fn(|_, _| rng.random_range(-100.0..100.0)))
        .collect()
}

fn dyadic_hand(rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..NUM_KEYPOINTS)
        .map(|_| Vec3::from_fn(|_, _| rng.random_range(-8000i32..8000) as f64 / 64.0))
        .collect()
}

fn metrics_oracle(o: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let root = RootJoint::MiddleMcp;

    let mut sim_worst: f64 = 0.0;
    for _ in 0..100 {
        let gt = [hand_mm(&mut rng), hand_mm(&mut rng)];
        let pred = gt.clone().map(|h| {
            let s = rng.random_range(0.5..2.0);
            let r = Rotation3::new(Vec3::from_fn(|_, _| rng.random_range(-3.0..3.0)));
            let t = Vec3::from_fn(|_, _| rng.random_range(-500.0..500.0));
            h.iter().map(|p| r * p * s + t).collect()
        });
        sim_worst = sim_worst.max(pampjpe(&EvalSample::joints(pred, gt)).unwrap());
    }
    o.report(
        "metrics: similarity-transformed GT",
        sim_worst < 1e-9,
        format!("worst pampjpe {sim_worst:.1e} mm (< 1e-9)"),
    );

    let mut violations = 0;
    for _ in 0..1000 {
        let gt = [hand_mm(&mut rng), hand_mm(&mut rng)];
        let pred = gt.clone().map(|h| {
            let noise = rng.random_range(0.1..30.0);
            h.iter()
                .map(|p| p + Vec3::from_fn(|_, _| rng.random_range(-noise..noise)))
                .collect()
        });
        let s = EvalSample::joints(pred, gt);
        if pampjpe(&s).unwrap() > mpjpe(&s, root).unwrap() {
            violations += 1;
        }
    }
    o.report(
        "metrics: pampjpe <= mpjpe",
        violations == 0,
        format!("{violations} of 1000 random samples violate"),
    );

    let mut mp_exact = true;
    let mut mr_exact = true;
    for _ in 0..200 {
        let gt = [dyadic_hand(&mut rng), dyadic_hand(&mut rng)];
        let pred = [dyadic_hand(&mut rng), dyadic_hand(&mut rng)];
        let base = EvalSample::joints(pred.clone(), gt.clone());
        let mut shift = || Vec3::from_fn(|_, _| rng.random_range(-4000i32..4000) as f64 / 16.0);
        let (a, b, g) = (shift(), shift(), shift());
        let per_hand = EvalSample::joints(
            [
                pred[0].iter().map(|p| p + a).collect(),
                pred[1].iter().map(|p| p + b).collect(),
            ],
            gt.clone(),
        );
        mp_exact &= mpjpe(&per_hand, root).unwrap() == mpjpe(&base, root).unwrap();
        let global = EvalSample::joints(pred.clone().map(|h| h.iter().map(|p| p + g).collect()), gt.clone());
        mr_exact &= mrrpe(&global, root).unwrap() == mrrpe(&base, root).unwrap();
    }
    o.report(
        "metrics: mpjpe translation invariance",
        mp_exact,
        "bitwise equal over 200 per-hand shifts".into(),
    );
    o.report(
        "metrics: mrrpe global-shift invariance",
        mr_exact,
        "bitwise equal over 200 global shifts".into(),
    );
}

fn annotation_consistency(o: &mut Outcome, cfg: &PipelineConfig) {
    let dir = cfg.out_dir().join(pipeline::ANNOTATIONS_DIR);
    let mut records = 0;
    let mut worst: f64 = 0.0;
    for f in pipeline::annotation_files(&dir).unwrap() {
        let ann = read_annotations(&f).unwrap();
        for r in &ann.records {
            records += 1;
            let c = &r.camera;
            for h in 0..2 {
                for (p, q) in r.joints_3d[h].iter().zip(&r.joints_2d[h]) {
                    let u = c.fx * p[0] / p[2] + c.cx;
                    let v = c.fy * p[1] / p[2] + c.cy;
                    worst = worst.max((u - q[0]).hypot(v - q[1]));
                }
            }
        }
    }
    let rig_cfg = RigConfig::default();
    let center = Vec3::new(0.03, -0.2, 0.45);
    let rig = build_rig(&center, &rig_cfg).unwrap();
    let mut pp: f64 = 0.0;
    for c in &rig {
        let pc = c.to_camera(&center);
        pp = pp.max((c.fx * pc.x / pc.z).hypot(c.fy * pc.y / pc.z));
    }
    o.report(
        "annotation self-consistency",
        records > 0 && worst < 1e-3 && rig.len() == 40 && pp < 1e-9,
        format!(
            "{records} records, worst reprojection {worst:.1e} px (< 1e-3); rig of {} cameras; center off principal point by {pp:.1e} px",
            rig.len()
        ),
    );
}

fn determinism(o: &mut Outcome, tmp: &Path) {
    let base = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml");
    let mut manifests = Vec::new();
    for (i, workers) in [(0, 1), (1, 4)] {
        let mut cfg = PipelineConfig::load(&base).unwrap();
        cfg.paths.out_dir = tmp.join(format!("det{i}"));
        cfg.workers = workers;
        pipeline::with_workers(workers, || pipeline::run_all(&cfg)).unwrap().unwrap();
        manifests.push(std::fs::read(cfg.out_dir().join(pipeline::RUN_MANIFEST)).unwrap());
    }
    o.report(
        "determinism",
        manifests[0] == manifests[1],
        format!("manifests of two runs ({} bytes) are byte-identical", manifests[0].len()),
    );
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut o = Outcome { failures: 0 };

    metrics_oracle(&mut o);
    determinism(&mut o, tmp.path());

    let cfg = demo_config(&tmp.path().join("demo"));
    let t = Instant::now();
    let run = pipeline::with_workers(4, || pipeline::run_all(&cfg)).unwrap().unwrap();
    let secs = t.elapsed().as_secs_f64();
    let models = pipeline::build_models(&cfg).unwrap();
    let anchors = pipeline::load_anchors(cfg.out_dir(), &models).unwrap();
    let net = pipeline::load_discriminator(cfg.out_dir()).unwrap();

    yield_and_contact(&mut o, &run, secs);
    anatomic_validity(&mut o, &run);
    annotation_consistency(&mut o, &cfg);
    gradient_suite(&mut o, &models, &anchors, &net);
    penetration_elimination(&mut o, &models, &anchors, &net);
    discriminator_effect(&mut o, &cfg, &models, &run, tmp.path());

    if o.failures > 0 {
        println!("{} acceptance criteria failed", o.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
