use nalgebra::{DMatrix, DVector, Isometry3, Matrix4, Rotation3, Vector3};
use proptest::prelude::*;

use sl4map::eval::recon_metrics;
use sl4map::graph::{optimize_lm, FactorGraph, GraphValues, LmConfig, VariableId};
use sl4map::io::{read_tum, write_tum};
use sl4map::lie::{
    basis_matrix, basis_pseudo_inverse, hat, vee, Homography, LieGroup, Sim3Transform,
    TangentVector,
};
use sl4map::oracle::{make_scene, reconstruct, SceneLayout, WarpKind, WarpModel};
use sl4map::projective::{ransac_homography, solve_dlt, Correspondence};

fn tangent(bound: f64) -> impl Strategy<Value = TangentVector> {
    prop::collection::vec(-bound..bound, 15).prop_map(|v| TangentVector::from_slice(&v))
}

/// Tangent vector with Euclidean norm at most `bound`.
fn tangent_in_ball(bound: f64) -> impl Strategy<Value = TangentVector> {
    tangent(1.0).prop_map(move |t| {
        let n = t.norm();
        if n > 1.0 {
            TangentVector(t.0 * (bound / n))
        } else {
            TangentVector(t.0 * bound)
        }
    })
}

fn point() -> impl Strategy<Value = Vector3<f64>> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn frob_up_to_sign(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    (a - b).norm().min((a + b).norm())
}

/// Noise-free correspondences `a = H·b`, keeping points with positive weight.
fn correspondences(h: &Homography, bs: &[Vector3<f64>]) -> Vec<Correspondence> {
    bs.iter()
        .filter_map(|b| {
            let x = h.matrix() * b.push(1.0);
            (x.w > 0.05).then(|| Correspondence::new(x.xyz() / x.w, *b))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exp_log_round_trip(xi in tangent(0.5)) {
        let back = Homography::exp(&xi).log().unwrap();
        prop_assert!((back.0 - xi.0).amax() < 1e-9);
    }

    #[test]
    fn exp_has_unit_determinant(xi in tangent(1.0)) {
        prop_assert!((Homography::exp(&xi).determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn adjoint_conjugates_the_algebra(x in tangent(0.5), xi in tangent(1.0)) {
        let h = Homography::exp(&x);
        let lhs = h.matrix() * hat(&xi) * h.inverse().matrix();
        let rhs = hat(&h.adjoint().apply(&xi));
        prop_assert!((lhs - rhs).amax() < 1e-9);
    }

    #[test]
    fn adjoint_is_a_homomorphism(a in tangent(0.5), b in tangent(0.5)) {
        let (ha, hb) = (Homography::exp(&a), Homography::exp(&b));
        let lhs = ha.compose(&hb).adjoint().0;
        let rhs = ha.adjoint().0 * hb.adjoint().0;
        prop_assert!((lhs - rhs).amax() < 1e-9);
        let inv = ha.inverse().adjoint().0 * ha.adjoint().0;
        prop_assert!((inv - nalgebra::SMatrix::<f64, 15, 15>::identity()).amax() < 1e-9);
    }

    #[test]
    fn hat_and_vee_are_inverse(xi in tangent(10.0)) {
        // off-diagonal coordinates are copied; diagonal ones pass through sums
        let back = vee(&hat(&xi)).unwrap();
        prop_assert_eq!(back.0.rows(0, 12), xi.0.rows(0, 12));
        prop_assert!((back.0 - xi.0).amax() <= 1e-14 * xi.amax().max(1.0));
        let m = hat(&xi);
        prop_assert!((hat(&vee(&m).unwrap()) - m).amax() <= 1e-14 * m.amax().max(1.0));
    }

    #[test]
    fn dlt_recovers_random_homographies(
        xi in tangent_in_ball(1.0),
        bs in prop::collection::vec(point(), 20..40),
    ) {
        let h0 = Homography::exp(&xi);
        let corrs = correspondences(&h0, &bs);
        prop_assume!(corrs.len() >= 12);
        let h = solve_dlt(&corrs).unwrap();
        prop_assert!(frob_up_to_sign(h.matrix(), h0.matrix()) < 1e-7);
        prop_assert!((h.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dlt_is_invariant_to_uniform_rescaling(
        xi in tangent_in_ball(0.5),
        bs in prop::collection::vec(point(), 20..30),
        scale in 1e-2..1e2f64,
    ) {
        let h0 = Homography::exp(&xi);
        let corrs = correspondences(&h0, &bs);
        prop_assume!(corrs.len() >= 12);
        let scaled: Vec<Correspondence> = corrs
            .iter()
            .map(|c| Correspondence::new(c.a * scale, c.b * scale))
            .collect();
        // rescaling both sides conjugates H by diag(s, s, s, 1)
        let s = Matrix4::from_diagonal(&nalgebra::Vector4::new(scale, scale, scale, 1.0));
        let s_inv = s.try_inverse().unwrap();
        let h = solve_dlt(&corrs).unwrap();
        let hs = Homography::normalized(s_inv * solve_dlt(&scaled).unwrap().matrix() * s).unwrap();
        prop_assert!(frob_up_to_sign(h.matrix(), hs.matrix()) < 1e-8);
    }

    #[test]
    fn dlt_returns_the_promoted_similarity(
        s in 0.3..3.0f64,
        axis in point(),
        t in point(),
        bs in prop::collection::vec(point(), 12..20),
    ) {
        prop_assume!(axis.norm() > 1e-3);
        let sim = Sim3Transform::new(s, Rotation3::new(axis), t).unwrap();
        let corrs: Vec<Correspondence> = bs
            .iter()
            .map(|b| Correspondence::new(sim.transform_point(b), *b))
            .collect();
        let h = solve_dlt(&corrs).unwrap();
        let expected = sim.to_homography();
        prop_assert!(frob_up_to_sign(h.matrix(), expected.matrix()) < 1e-7);
    }

    #[test]
    fn ransac_is_deterministic(xi in tangent_in_ball(0.5), seed in any::<u64>()) {
        let bs: Vec<Vector3<f64>> = (0..40)
            .map(|k| Vector3::new((k % 7) as f64 * 0.3, (k % 5) as f64 * 0.4 - 1.0, (k % 3) as f64 * 0.5 + 0.1 * k as f64))
            .collect();
        let mut corrs = correspondences(&Homography::exp(&xi), &bs);
        prop_assume!(corrs.len() >= 20);
        for c in corrs.iter_mut().step_by(4) {
            c.a = Vector3::new(c.a.z, -c.a.x, c.a.y + 3.0);
        }
        let r1 = ransac_homography(&corrs, 50, 0.01, seed);
        let r2 = ransac_homography(&corrs, 50, 0.01, seed);
        prop_assert_eq!(r1, r2);
    }

    #[test]
    fn tum_round_trip(
        poses in prop::collection::vec((any::<u32>(), point(), point()), 1..20),
    ) {
        let poses: Vec<(u64, Isometry3<f64>)> = poses
            .into_iter()
            .map(|(id, t, r)| (id as u64, Isometry3::new(t * 100.0, r)))
            .collect();
        let mut buf = Vec::new();
        write_tum(&mut buf, &poses).unwrap();
        let back = read_tum(buf.as_slice(), "mem").unwrap();
        prop_assert_eq!(back.len(), poses.len());
        for (a, b) in back.iter().zip(&poses) {
            prop_assert_eq!(a.0, b.0);
            prop_assert!((a.1.to_homogeneous() - b.1.to_homogeneous()).amax() < 1e-9);
        }
    }

    #[test]
    fn chamfer_is_symmetric(
        a in prop::collection::vec(point(), 1..80),
        b in prop::collection::vec(point(), 1..80),
    ) {
        let ab = recon_metrics(&a, &b, None).unwrap();
        let ba = recon_metrics(&b, &a, None).unwrap();
        prop_assert_eq!(ab.accuracy, ba.completion);
        prop_assert_eq!(ab.completion, ba.accuracy);
        prop_assert!((ab.chamfer - ba.chamfer).abs() <= 1e-15);
        prop_assert!(ab.accuracy >= 0.0 && ab.completion >= 0.0);
    }
}

#[test]
fn basis_has_a_left_inverse() {
    let b = basis_matrix();
    let p = basis_pseudo_inverse();
    assert!((p * b - nalgebra::SMatrix::<f64, 15, 15>::identity()).amax() < 1e-12);
    assert_eq!(b.rank(1e-10), 15);
}

fn chain_fixture(n: usize, seed: u64) -> (FactorGraph<Homography>, Vec<Homography>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<Homography> = (0..n)
        .map(|k| {
            if k == 0 {
                Homography::identity()
            } else {
                let v: Vec<f64> = (0..15).map(|_| rng.random_range(-0.15..0.15)).collect();
                Homography::exp(&TangentVector::from_slice(&v))
            }
        })
        .collect();
    let mut g = FactorGraph::new();
    g.add_prior(
        VariableId(0),
        Homography::identity(),
        DMatrix::identity(15, 15) * 1e6,
    )
    .unwrap();
    for k in 1..n {
        for j in [k.saturating_sub(2), k - 1] {
            if j == k {
                continue;
            }
            let z = truth[j].inverse().compose(&truth[k]);
            g.add_between(VariableId(j), VariableId(k), z, DMatrix::identity(15, 15))
                .unwrap();
        }
    }
    (g, truth)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn consistent_graphs_are_anchored_and_descend(n in 3usize..7, seed in any::<u64>()) {
        let (g, truth) = chain_fixture(n, seed);
        let init: GraphValues<Homography> =
            (0..n).map(|k| (VariableId(k), Homography::identity())).collect();
        let (sol, report) = optimize_lm(&g, &init, &LmConfig::default()).unwrap();
        for (k, t) in truth.iter().enumerate() {
            prop_assert!((sol[&VariableId(k)].matrix() - t.matrix()).amax() < 1e-6);
            prop_assert!((sol[&VariableId(k)].determinant() - 1.0).abs() < 1e-8);
        }
        let costs: Vec<f64> = report.accepted_costs().collect();
        prop_assert!(costs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn unwarped_reconstruction_is_rigid(seed in any::<u64>(), call in 0u64..4) {
        let scene = make_scene(seed % 16, 300, 6, SceneLayout::Room);
        let out = reconstruct(&scene, &[1, 2, 4], &WarpModel::default(), seed, call).unwrap();
        let anchor_inv = scene.cameras[1].inverse();
        for (f, k) in out.frames.iter().zip([1usize, 2, 4]) {
            for (p, &i) in f.points.iter().zip(&scene.visibility[k]) {
                let expected = anchor_inv * nalgebra::Point3::from(scene.points[i]);
                prop_assert!((p - expected.coords).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_warps_stay_in_the_log_domain(seed in any::<u64>(), magnitude in 0.0..=1.0f64) {
        let scene = make_scene(seed % 8, 300, 6, SceneLayout::CorridorLoop);
        let model = WarpModel {
            kind: WarpKind::Sl4,
            magnitude,
            anchor_first: false,
            ..WarpModel::default()
        };
        let a = reconstruct(&scene, &[0, 1, 2], &model, seed, 3).unwrap();
        let b = reconstruct(&scene, &[0, 1, 2], &model, seed, 3).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.warp.log().is_ok());
    }
}

#[test]
fn sim3_group_round_trips() {
    let xi = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.05, 0.02, -0.04, 0.1]);
    let s = <Sim3Transform as LieGroup>::exp(&xi);
    assert!((s.log().unwrap() - xi).amax() < 1e-12);
}
