use super::*;
use crate::kernels::{Location, MatrixKernel};
use crate::lowrank::{LowRankOptions, RankSelection};
use crate::mesh::LandmarkSet;
use crate::synthetic;
use crate::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference() -> Arc<Surface> {
    // 10 × 10 vertices
    Arc::new(Surface::new(synthetic::grid(10, 10, 2.0)))
}

fn jitter(mesh: &TriangleMesh, rng: &mut ChaCha8Rng, scale: f64) -> TriangleMesh {
    mesh.with_vertices(
        mesh.vertices()
            .iter()
            .map(|p| p + Vec3::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
            .collect(),
    )
    .unwrap()
}

#[test]
fn two_sample_pca_by_hand() {
    let r = reference();
    let mesh = r.mesh();
    let d = Vec3::new(0.3, -0.1, 0.7);
    let a = mesh.with_vertices(mesh.vertices().iter().map(|p| p + d * 0.5).collect()).unwrap();
    let b = mesh.with_vertices(mesh.vertices().iter().map(|p| p - d * 0.5).collect()).unwrap();
    let gp = build_shape_model(&[a, b], r.clone()).unwrap();
    assert_eq!(gp.rank(), 1);
    let expect = mesh.vertex_count() as f64 * d.norm_squared() / 2.0;
    assert!((gp.variances()[0] - expect).abs() < 1e-12 * expect);
    assert!(gp.mean().amax() < 1e-15);
}

#[test]
fn identical_meshes_give_zero_variance() {
    let r = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = jitter(r.mesh(), &mut rng, 0.5);
    let gp = build_shape_model(&[m.clone(), m.clone(), m.clone()], r.clone()).unwrap();
    assert_eq!(gp.rank(), 2);
    assert!(gp.variances().iter().all(|v| *v == 0.0));
    let warped = gp.warp(&DVector::zeros(2)).unwrap();
    for (p, q) in warped.vertices().iter().zip(m.vertices()) {
        assert!((p - q).norm() < 1e-12);
    }
}

#[test]
fn full_rank_reconstructs_training_meshes() {
    let r = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let meshes: Vec<TriangleMesh> = (0..6).map(|_| jitter(r.mesh(), &mut rng, 1.0)).collect();
    let gp = build_shape_model(&meshes, r.clone()).unwrap();
    assert_eq!(gp.rank(), 5);
    assert!(gp.variances().iter().all(|v| *v >= 0.0));
    let ortho = gp.basis().tr_mul(gp.basis());
    assert!((ortho - DMatrix::identity(5, 5)).amax() < 1e-9);
    for m in &meshes {
        let d = deformation(r.mesh(), m);
        let back = gp.warp(&gp.project(&d).unwrap()).unwrap();
        for (p, q) in back.vertices().iter().zip(m.vertices()) {
            assert!((p - q).norm() <= 1e-6);
        }
    }
}

#[test]
fn topology_mismatch_rejected() {
    let r = reference();
    let other = synthetic::grid(5, 5, 1.0);
    assert!(build_shape_model(&[other.clone(), other], r).is_err());
}

#[test]
fn sampled_covariance_recovers_subspace() {
    let r = reference();
    let dim = 3 * r.mesh().vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw = DMatrix::from_fn(dim, 5, |_, _| rng.random_range(-1.0..1.0));
    let basis = raw.qr().q();
    let variances = DVector::from_vec(vec![9.0, 4.0, 1.0, 0.25, 0.0625]);
    let truth = LowRankGp::new(r.clone(), DVector::zeros(dim), basis, variances).unwrap();
    let samples: Vec<DVector<f64>> = (0..10_000).map(|s| truth.field(&truth.sample(s)).unwrap()).collect();
    let learned = pca_model(r, &samples).unwrap();
    let angles = principal_angles(&truth.basis().columns(0, 3).into_owned(), &learned.basis().columns(0, 3).into_owned());
    assert!(angles.iter().all(|a| *a <= 5f64.to_radians()), "{angles:?}");
}

pub(crate) fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    a.tr_mul(b).singular_values().iter().map(|s| s.clamp(-1.0, 1.0).acos()).collect()
}

fn random_colors(n: usize, rng: &mut ChaCha8Rng) -> Vec<Rgb> {
    (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()
}

fn random_samples(n_samples: usize, n: usize, p_visible: f64, seed: u64) -> Vec<ColorSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples)
        .map(|_| {
            let colors = random_colors(n, &mut rng);
            let mask = (0..n).map(|_| rng.random_bool(p_visible)).collect();
            ColorSample::new(colors, mask).unwrap()
        })
        .collect()
}

#[test]
fn color_mean_cases() {
    let n = 100;
    let grey = vec![[0.5; 3]; n];
    let full = random_samples(4, n, 1.0, 4);
    let m = color_mean_missing(&full, &grey).unwrap();
    for v in 0..n {
        for c in 0..3 {
            let avg = full.iter().map(|s| s.colors[v][c]).sum::<f64>() / 4.0;
            assert!((m.mean[v][c] - avg).abs() < 1e-15);
        }
    }

    let mut one = random_samples(3, n, 0.0, 5);
    one[1].mask[7] = true;
    let m = color_mean_missing(&one, &grey).unwrap();
    assert_eq!(m.mean[7], one[1].colors[7]);
    assert!(!m.fallback[7] && m.fallback[8]);
    assert_eq!(m.mean[8], [0.5; 3]);

    let mixed = random_samples(5, n, 0.6, 6);
    let m = color_mean_missing(&mixed, &grey).unwrap();
    for v in 0..n {
        let (mut sum, mut z) = ([0.0; 3], 0.0);
        for s in &mixed {
            if s.mask[v] {
                z += 1.0;
                for c in 0..3 {
                    sum[c] += s.colors[v][c];
                }
            }
        }
        if z > 0.0 {
            assert_eq!(m.mean[v], sum.map(|x| x / z));
        }
    }
}

/// Term-wise evaluation of the missing-data covariance at a vertex pair.
fn brute_force(samples: &[ColorSample], mean: &[Rgb], prior: f64, a: usize, b: usize) -> Mat3 {
    let n = samples.len() as f64;
    let mut k = Mat3::zeros();
    for s in samples {
        let z = (s.mask[a] as u8 * s.mask[b] as u8) as f64;
        let da = Vec3::from(s.colors[a]) - Vec3::from(mean[a]);
        let db = Vec3::from(s.colors[b]) - Vec3::from(mean[b]);
        if z == 1.0 {
            k += da * db.transpose();
        } else {
            k += Mat3::identity() * prior;
        }
    }
    k / (n - 1.0)
}

use crate::Mat3;

#[test]
fn color_covariance_matches_formula_exactly() {
    let r = reference();
    let mesh = r.mesh();
    let n = mesh.vertex_count();
    let prior = default_color_prior();
    for (p, seed) in [(1.0, 7), (0.0, 8), (0.7, 9)] {
        let samples = random_samples(6, n, p, seed);
        let mean = color_mean_missing(&samples, &vec![[0.5; 3]; n]).unwrap().mean;
        let k = ColorCovariance::new(r.clone(), samples.clone(), &mean, Arc::new(prior)).unwrap();
        for a in 0..n {
            for b in 0..n {
                let (la, lb) = (Location::vertex(mesh, a), Location::vertex(mesh, b));
                let pk = crate::kernels::ScalarKernel::eval(&prior, &la, &lb);
                assert_eq!(k.eval(&la, &lb), brute_force(&samples, &mean, pk, a, b));
                if p == 0.0 {
                    let expect = Mat3::identity() * (pk * 6.0 / 5.0);
                    assert!((k.eval(&la, &lb) - expect).amax() <= 1e-18);
                }
            }
        }
    }
}

#[test]
fn complete_colors_match_pca() {
    let r = reference();
    let n = r.mesh().vertex_count();
    let samples = random_samples(8, n, 1.0, 10);
    let opts = LowRankOptions { rank: RankSelection::Fixed(7), ..Default::default() };
    let (gp, _, mean) = build_color_model(samples.clone(), r.clone(), Arc::new(default_color_prior()), &opts).unwrap();
    let flat: Vec<DVector<f64>> =
        samples.iter().map(|s| flatten(&s.colors.iter().map(|c| Vec3::from(*c)).collect::<Vec<_>>())).collect();
    let pca = pca_model(r, &flat).unwrap();
    assert!((gp.mean() - pca.mean()).amax() < 1e-15);
    assert!(mean.fallback.iter().all(|f| !f));
    let cov = |g: &LowRankGp| g.scaled_basis() * g.scaled_basis().transpose();
    let (a, b) = (cov(&gp), cov(&pca));
    assert!((&a - &b).norm() <= 1e-3 * b.norm());
}

#[test]
fn masked_region_takes_prior_variance() {
    // the visible block is full rank, so clamping has nothing to inflate
    let r = reference();
    let n = r.mesh().vertex_count();
    let mut samples = random_samples(41, n, 1.0, 11);
    let masked: Vec<usize> = (0..n).filter(|&v| r.mesh().vertices()[v].x < 8.0).collect();
    assert_eq!(masked.len(), 90);
    for s in &mut samples {
        for &v in &masked {
            s.mask[v] = false;
        }
    }
    let opts = LowRankOptions { rank: RankSelection::Fixed(3 * n), ..Default::default() };
    let (gp, _, _) = build_color_model(samples, r, Arc::new(default_color_prior()), &opts).unwrap();
    for &v in &masked {
        let c = gp.covariance(v, v);
        for ch in 0..3 {
            assert!((c[(ch, ch)] - 1.0e-4).abs() <= 0.1e-4, "{}", c[(ch, ch)]);
        }
    }
}

#[test]
fn expression_model_cases() {
    let r = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let neutrals: Vec<TriangleMesh> = (0..4).map(|_| jitter(r.mesh(), &mut rng, 1.0)).collect();
    let pairs: Vec<(&TriangleMesh, &TriangleMesh)> = neutrals.iter().map(|m| (m, m)).collect();
    let zero = build_expression_model(&pairs, r.clone()).unwrap();
    assert!(zero.variances().iter().all(|v| *v == 0.0) && zero.mean().amax() == 0.0);

    let expr = jitter(&neutrals[0], &mut rng, 2.0);
    let single = build_expression_model(&[(&neutrals[0], &expr)], r.clone()).unwrap();
    assert_eq!(single.rank(), 0);
    assert!((single.mean() - deformation(&neutrals[0], &expr)).amax() < 1e-12);

    let exprs: Vec<TriangleMesh> = neutrals.iter().map(|m| jitter(m, &mut rng, 2.0)).collect();
    let pairs: Vec<(&TriangleMesh, &TriangleMesh)> = neutrals.iter().zip(&exprs).collect();
    let full = build_expression_model(&pairs, r).unwrap();
    for (nm, em) in &pairs {
        let d = deformation(nm, em);
        let back = full.field(&full.project(&d).unwrap()).unwrap();
        assert!((back - d).amax() <= 1e-6);
    }
}

fn toy_model() -> MorphableModel {
    let r = reference();
    let n = r.mesh().vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let meshes: Vec<TriangleMesh> = (0..4).map(|_| jitter(r.mesh(), &mut rng, 1.0)).collect();
    let shape = build_shape_model(&meshes, r.clone()).unwrap();
    let exprs: Vec<TriangleMesh> = meshes.iter().map(|m| jitter(m, &mut rng, 2.0)).collect();
    let pairs: Vec<(&TriangleMesh, &TriangleMesh)> = meshes.iter().zip(&exprs).collect();
    let expression = build_expression_model(&pairs, r.clone()).unwrap();
    let opts = LowRankOptions { rank: RankSelection::Fixed(3), ..Default::default() };
    let color = build_color_model(random_samples(4, n, 0.8, 14), r, Arc::new(default_color_prior()), &opts).unwrap().0;
    MorphableModel::assemble(shape, color, expression).unwrap()
}

#[test]
fn instance_is_affine_and_clamped() {
    let m = toy_model();
    let mean = m.mean_instance().unwrap();
    let expect = m.shape.field(&DVector::zeros(3)).unwrap() + m.expression.mean();
    for (i, p) in mean.vertices().iter().enumerate() {
        assert!((p - m.reference().vertices()[i] - expect.fixed_rows::<3>(3 * i)).norm() < 1e-12);
    }
    let (s1, e1) = (DVector::from_vec(vec![1.0, -0.5, 2.0]), DVector::from_vec(vec![0.3, 0.1, -1.0]));
    let zc = DVector::zeros(3);
    let f = |s: &DVector<f64>, e: &DVector<f64>| m.instance(s, &zc, e).unwrap().vertices().to_vec();
    let (both, s_only, e_only) = (f(&s1, &e1), f(&s1, &DVector::zeros(3)), f(&DVector::zeros(3), &e1));
    for i in 0..both.len() {
        let lin = s_only[i] + (e_only[i] - mean.vertices()[i]);
        assert!((both[i] - lin).norm() < 1e-9);
    }
    let wild = m.instance(&zc, &DVector::from_element(3, 1e6), &zc).unwrap();
    assert!(wild.colors().unwrap().iter().flatten().all(|c| (0.0..=1.0).contains(c)));
    assert!(m.instance(&DVector::zeros(2), &zc, &zc).is_err());
}

#[test]
fn morphable_model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = toy_model();
    let path = dir.path().join("model.gpmm");
    m.save(&path).unwrap();
    let loaded = MorphableModel::load(&path).unwrap();
    assert_eq!(loaded.shape.rank(), 3);
    loaded.save(dir.path().join("again.gpmm")).unwrap();
    let again = MorphableModel::load(dir.path().join("again.gpmm")).unwrap();
    assert_eq!(again.to_bytes().unwrap(), loaded.to_bytes().unwrap());
}

fn lms(points: &[(&str, Point3)]) -> LandmarkSet {
    LandmarkSet::from_pairs(points.iter().map(|(n, p)| (*n, *p))).unwrap()
}

#[test]
fn landmark_report_cases() {
    let regions = RegionMap::new([("a", "Left Eye"), ("b", "Left Eye"), ("c", "Nose")]);
    let truth = lms(&[("a", Point3::new(0.0, 0.0, 0.0)), ("b", Point3::new(5.0, 0.0, 0.0)), ("c", Point3::new(0.0, 9.0, 0.0))]);
    let same = evaluate_landmarks(&truth, &truth, &regions).unwrap();
    assert!(same.regions.iter().all(|r| r.mean == 0.0 && r.std == 0.0));
    assert_eq!(same.regions[0].name, "Left Eye");

    let shifted = truth.map_points(|p| p + Vec3::new(0.0, 0.0, 1.0));
    let one = evaluate_landmarks(&shifted, &truth, &regions).unwrap();
    for r in &one.regions {
        assert!((r.mean - 1.0).abs() < 1e-15 && r.std.abs() < 1e-15);
    }

    let two = lms(&[("a", Point3::new(1.0, 0.0, 0.0)), ("b", Point3::new(5.0, 3.0, 0.0)), ("c", Point3::new(0.0, 9.0, 0.0))]);
    let rep = evaluate_landmarks(&two, &truth, &regions).unwrap();
    assert!((rep.regions[0].mean - 2.0).abs() < 1e-15);
    assert!((rep.regions[0].std - 2f64.sqrt()).abs() < 1e-12);
    assert!(rep.to_table().contains("2.00 ± 1.41"));

    let missing = lms(&[("a", Point3::origin()), ("zz", Point3::origin())]);
    match evaluate_landmarks(&missing, &truth, &regions) {
        Err(crate::Error::UnmatchedLandmarks(names)) => assert_eq!(names, ["b", "c", "zz"]),
        other => panic!("{other:?}"),
    }
}
