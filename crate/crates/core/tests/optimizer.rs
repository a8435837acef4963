use std::sync::OnceLock;

use nalgebra::{Rotation3, Vector3};

use handsynth::hand::{joint_index, HandPair, HandPose, HandProportions, PosePair, PosedHand, Side, BEND};
use handsynth::limits::JointLimits;
use handsynth::losses::{max_penetration_depth, AnchorPair, HandGrids, LossWeights, Objective};
use handsynth::mesh::TriMesh;
use handsynth::optimizer::{optimize_pair, run_batch, validity_filter, Pairing, Schedule};
use handsynth::losses::AnchorSets;

fn setup() -> &'static (HandPair, HandGrids) {
    static S: OnceLock<(HandPair, HandGrids)> = OnceLock::new();
    S.get_or_init(|| {
        let m = HandPair::build(&HandProportions::default()).unwrap();
        let g = HandGrids::build(&m, 32, 3).unwrap();
        (m, g)
    })
}

fn objective<'a>(m: &'a HandPair, g: &'a HandGrids, limits: &'a JointLimits) -> Objective<'a> {
    Objective {
        models: m,
        grids: g,
        limits,
        discriminator: None,
    }
}

fn distant_t_poses() -> PosePair {
    PosePair::new(
        HandPose::t_pose(Side::Right),
        HandPose::t_pose(Side::Left).with_translation(Vector3::new(0.5, 0.0, 0.0)),
    )
}

/// Palms stacked along their normal: 25 mm apart when just touching.
fn stacked(gap_z: f64) -> PosePair {
    PosePair::new(
        HandPose::t_pose(Side::Right),
        HandPose::t_pose(Side::Left).with_translation(Vector3::new(0.0, 0.0, gap_z)),
    )
}

fn brute_depth(m: &HandPair, pair: &PosePair) -> f64 {
    let posed = [PosedHand::new(&m.right, &pair.right), PosedHand::new(&m.left, &pair.left)];
    let mut deepest: f64 = 0.0;
    for side in [Side::Right, Side::Left] {
        let o = side.other();
        let om = m.get(o);
        let other = &posed[o.index()];
        let parts: Vec<TriMesh> = om
            .parts
            .iter()
            .zip(&om.part_meshes)
            .map(|(idx, c)| TriMesh::new(idx.iter().map(|&v| other.vertices[v]).collect(), c.faces.clone()))
            .collect();
        for p in &posed[side.index()].vertices {
            for t in &parts {
                if t.contains(p) {
                    deepest = deepest.max(t.distance(p));
                }
            }
        }
    }
    deepest
}

#[test]
fn zero_loss_pair_is_a_fixed_point() {
    let (m, g) = setup();
    let limits = JointLimits::default();
    let obj = objective(m, g, &limits);
    let initial = distant_t_poses();
    let out = optimize_pair(&initial, &obj, Pairing::Fixed(&[]), &Schedule::default()).unwrap();
    assert!(out.trace.rows.iter().all(|r| r.terms.total == 0.0));
    assert_eq!(out.trace.rows.len(), 216);
    for (a, b) in [(&initial.right, &out.pair.right), (&initial.left, &out.pair.left)] {
        assert!((a.root_translation - b.root_translation).norm() < 1e-9);
        assert!((a.root_rotation.matrix() - b.root_rotation.matrix()).norm() < 1e-9);
        assert!(a.angles.iter().flatten().zip(b.angles.iter().flatten()).all(|(x, y)| (x - y).abs() < 1e-9));
    }
}

#[test]
fn penetration_only_weights_separate_the_hands() {
    let (m, g) = setup();
    let limits = JointLimits::default();
    let obj = objective(m, g, &limits);
    let mut initial = stacked(0.016);
    initial.left.root_rotation = Rotation3::from_euler_angles(0.05, -0.03, 0.1);
    let before = brute_depth(m, &initial);
    assert!(before > 0.005);
    let schedule = Schedule::default().with_fixed_weights(LossWeights {
        w1: 0.0,
        w2: 0.0,
        w3: 0.0,
        w4: 1.0,
    });
    let out = optimize_pair(&initial, &obj, Pairing::Fixed(&[]), &schedule).unwrap();
    let lp0 = out.trace.first().unwrap().terms.penetration;
    let lp1 = out.trace.last().unwrap().terms.penetration;
    assert!(lp1 < 0.05 * lp0, "L_p {lp0} -> {lp1}");
    assert!(brute_depth(m, &out.pair) < before);
}

#[test]
fn forced_spring_collapses() {
    let (m, g) = setup();
    let limits = JointLimits::default();
    let obj = objective(m, g, &limits);
    let initial = PosePair::new(
        HandPose::t_pose(Side::Right),
        HandPose::t_pose(Side::Left).with_translation(Vector3::new(0.02, 0.03, 0.06)),
    );
    let (rv, lv) = (m.right.parts[0][40], m.left.parts[0][40]);
    let pair = [AnchorPair {
        right: rv,
        left: lv,
        rest_distance: 0.0,
        k: 1.0,
    }];
    let schedule = Schedule::default().with_fixed_weights(LossWeights {
        w1: 1.0,
        w2: 0.0,
        w3: 0.0,
        w4: 0.0,
    });
    let out = optimize_pair(&initial, &obj, Pairing::Fixed(&pair), &schedule).unwrap();
    let r = PosedHand::new(&m.right, &out.pair.right);
    let l = PosedHand::new(&m.left, &out.pair.left);
    let d0 = (PosedHand::new(&m.right, &initial.right).vertices[rv] - PosedHand::new(&m.left, &initial.left).vertices[lv]).norm();
    let d = (r.vertices[rv] - l.vertices[lv]).norm();
    assert!(d0 > 0.05);
    assert!(d < 0.001, "spring length {d}");
}

#[test]
fn filter_accepts_distant_t_poses() {
    let (m, _) = setup();
    let r = validity_filter(&distant_t_poses(), m, &JointLimits::default(), 0.002);
    assert!(r.pass && r.diagnostics.is_empty());
    assert_eq!(r.max_depth, 0.0);
}

#[test]
fn filter_rejects_thumb_overbend() {
    let (m, _) = setup();
    let mut pair = distant_t_poses();
    pair.right.angles[joint_index(0, 2) - 1][BEND] = 120f64.to_radians();
    let r = validity_filter(&pair, m, &JointLimits::default(), 0.002);
    assert!(!r.pass);
    assert_eq!(r.violations.len(), 1);
    assert!((r.violations[0].1.excess().to_degrees() - 20.0).abs() < 1e-9);
    assert!(r.diagnostics.iter().any(|d| d.starts_with("joint limit")));
}

#[test]
fn filter_rejects_five_millimeter_overlap() {
    let (m, _) = setup();
    let (mut near, mut far) = (0.012, 0.026);
    for _ in 0..30 {
        let mid = 0.5 * (near + far);
        if brute_depth(m, &stacked(mid)) > 0.005 {
            near = mid;
        } else {
            far = mid;
        }
    }
    let pair = stacked(far);
    let oracle = brute_depth(m, &pair);
    assert!((oracle - 0.005).abs() < 1e-6, "oracle depth {oracle}");
    let r = validity_filter(&pair, m, &JointLimits::default(), 0.002);
    assert!(!r.pass);
    assert!((r.max_depth - oracle).abs() < 1e-12);
    assert!(r.diagnostics.iter().any(|d| d.starts_with("penetration")));
    let posed = [PosedHand::new(&m.right, &pair.right), PosedHand::new(&m.left, &pair.left)];
    assert_eq!(max_penetration_depth(m, [&posed[0], &posed[1]]), r.max_depth);
}

#[test]
fn empty_batch_has_no_yield() {
    let (m, g) = setup();
    let limits = JointLimits::default();
    let obj = objective(m, g, &limits);
    let anchors: AnchorSets = serde_json::from_str(&format!(
        r#"{{"version":1,"contact_scale":0.02,"right":{{"side":"right","vertices":[],"normals":[]}},"left":{{"side":"left","vertices":[],"normals":[]}}}}"#
    ))
    .unwrap();
    let out = run_batch(&[], &obj, &anchors, &Schedule::default(), Some(0.002)).unwrap();
    assert!(out.is_empty());
    assert_eq!(handsynth::optimizer::BatchSummary::from_outcomes(&out).yield_rate, None);
}
