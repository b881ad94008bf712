use nalgebra::Matrix3;

use super::LandmarkSet;
use crate::{Error, Point3, Result, Vec3};

/// `p ↦ scale · R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords * self.scale + self.translation)
    }
}

/// Least-squares similarity transform taking `source` landmarks onto the
/// same-named `target` landmarks (Umeyama's closed form).
pub fn rigid_align(source: &LandmarkSet, target: &LandmarkSet) -> Result<SimilarityTransform> {
    let pairs = source.matched(target);
    if pairs.len() < 3 {
        return Err(Error::InvalidInput(format!("rigid alignment needs 3 shared landmarks, found {}", pairs.len())));
    }
    let n = pairs.len() as f64;
    let mu_s = pairs.iter().fold(Vec3::zeros(), |a, (_, s, _)| a + s.coords) / n;
    let mu_t = pairs.iter().fold(Vec3::zeros(), |a, (_, _, t)| a + t.coords) / n;

    let mut cov = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    let mut var_s = 0.0;
    for (_, s, t) in &pairs {
        let ds = s.coords - mu_s;
        let dt = t.coords - mu_t;
        cov += dt * ds.transpose();
        spread += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov /= n;
    var_s /= n;

    let sv = spread.svd(false, false).singular_values;
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted[0] <= 0.0 || sorted[1] <= 1e-12 * sorted[0] {
        return Err(Error::InvalidInput("landmarks are collinear".into()));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    // reflection fix on the smallest singular direction (nalgebra leaves them unsorted)
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        let d = svd.singular_values;
        let k = (0..3).min_by(|&a, &b| d[a].total_cmp(&d[b])).expect("three values");
        s[(k, k)] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = (Matrix3::from_diagonal(&svd.singular_values) * s).trace() / var_s;
    let translation = mu_t - rotation * mu_s * scale;
    Ok(SimilarityTransform { scale, rotation, translation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn cloud() -> LandmarkSet {
        LandmarkSet::from_pairs([
            ("a", Point3::new(0.0, 0.0, 0.0)),
            ("b", Point3::new(10.0, 1.0, -2.0)),
            ("c", Point3::new(3.0, 8.0, 1.0)),
            ("d", Point3::new(-4.0, 2.0, 6.0)),
            ("e", Point3::new(1.0, -5.0, 3.0)),
        ])
        .unwrap()
    }

    fn residual(src: &LandmarkSet, dst: &LandmarkSet, t: &SimilarityTransform) -> f64 {
        src.matched(dst).iter().map(|(_, s, d)| (t.apply(s) - d).norm_squared()).sum()
    }

    #[test]
    fn identical_sets_give_identity() {
        let t = rigid_align(&cloud(), &cloud()).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!((t.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_rotation_about_z() {
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), 30f64.to_radians());
        let target = cloud().map_points(|p| rot * p);
        let t = rigid_align(&cloud(), &target).unwrap();
        assert!((t.rotation - rot.matrix()).amax() < 1e-9);
        assert!((t.scale - 1.0).abs() < 1e-9);
        let r = t.rotation;
        assert!((r.transpose() * r - Matrix3::identity()).norm() <= 1e-9);
        assert!(r.determinant() > 0.0);
    }

    #[test]
    fn recovers_translation() {
        let target = cloud().map_points(|p| p + Vec3::new(1.0, 2.0, 3.0));
        let t = rigid_align(&cloud(), &target).unwrap();
        assert!((t.translation - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-9);
    }

    #[test]
    fn residual_invariant_under_common_rotation() {
        let noisy = cloud().map_points(|p| Point3::new(p.x * 1.1 + 0.3, p.y - 0.2 * p.z, p.z + 0.5));
        let base = residual(&cloud(), &noisy, &rigid_align(&cloud(), &noisy).unwrap());
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let (a, b) = (cloud().map_points(|p| rot * p), noisy.map_points(|p| rot * p));
        let rotated = residual(&a, &b, &rigid_align(&a, &b).unwrap());
        assert!((base - rotated).abs() < 1e-9 * base.max(1.0));
    }

    #[test]
    fn too_few_or_collinear() {
        let two = LandmarkSet::from_pairs([("a", Point3::origin()), ("b", Point3::new(1.0, 0.0, 0.0))]).unwrap();
        assert!(rigid_align(&two, &two).is_err());
        let line = LandmarkSet::from_pairs((0..4).map(|i| (format!("l{i}"), Point3::new(i as f64, 2.0 * i as f64, 0.0)))).unwrap();
        assert!(rigid_align(&line, &line).is_err());
    }
}
