use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Point3, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub name: String,
    pub point: Point3,
}

#[derive(Serialize, Deserialize)]
struct LandmarkJson {
    id: String,
    coordinates: [f64; 3],
}

/// Named points with unique names, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LandmarkSet {
    entries: Vec<Landmark>,
}

impl LandmarkSet {
    pub fn new(entries: Vec<Landmark>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate landmark name '{}'", e.name)));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, Point3)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(name, point)| Landmark { name: name.into(), point }).collect())
    }

    pub fn entries(&self) -> &[Landmark] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Point3> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.point)
    }

    /// Name-matched pairs `(name, self point, other point)` in `self` order.
    pub fn matched<'a>(&'a self, other: &'a LandmarkSet) -> Vec<(&'a str, Point3, Point3)> {
        self.entries
            .iter()
            .filter_map(|e| other.get(&e.name).map(|p| (e.name.as_str(), e.point, *p)))
            .collect()
    }

    pub fn map_points(&self, mut f: impl FnMut(&Point3) -> Point3) -> Self {
        Self { entries: self.entries.iter().map(|e| Landmark { name: e.name.clone(), point: f(&e.point) }).collect() }
    }

    pub fn from_json(text: &str, ctx: &str) -> Result<Self> {
        let raw: Vec<LandmarkJson> = serde_json::from_str(text).map_err(|e| Error::parse(ctx, e.to_string()))?;
        Self::new(
            raw.into_iter()
                .map(|l| Landmark { name: l.id, point: Point3::from(l.coordinates) })
                .collect(),
        )
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<LandmarkJson> = self
            .entries
            .iter()
            .map(|e| LandmarkJson { id: e.name.clone(), coordinates: [e.point.x, e.point.y, e.point.z] })
            .collect();
        serde_json::to_string_pretty(&raw).expect("landmarks serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Ordered polyline with at least two points.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline3 {
    points: Vec<Point3>,
}

impl Polyline3 {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!("polyline needs at least 2 points, got {}", points.len())));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn closest_point(&self, query: &Point3) -> Point3 {
        closest_point_on_polyline(self, query)
    }
}

/// Point on the polyline nearest to `query`; the first segment wins ties.
pub fn closest_point_on_polyline(line: &Polyline3, query: &Point3) -> Point3 {
    let mut best = (f64::INFINITY, line.points[0]);
    for seg in line.points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let ab = b - a;
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 { ((query - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let p = a + ab * t;
        let d = (p - query).norm_squared();
        if d < best.0 {
            best = (d, p);
        }
    }
    best.1
}

pub fn load_polyline(path: impl AsRef<Path>) -> Result<Polyline3> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: Vec<[f64; 3]> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    Polyline3::new(raw.into_iter().map(Point3::from).collect())
}

pub fn save_polyline(line: &Polyline3, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<[f64; 3]> = line.points.iter().map(|p| [p.x, p.y, p.z]).collect();
    std::fs::write(path, serde_json::to_string(&raw).expect("polyline serializes")).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn duplicate_names_rejected() {
        let r = LandmarkSet::from_pairs([("a", Point3::origin()), ("a", Point3::origin())]);
        assert!(r.is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = LandmarkSet::from_pairs([("nose", Point3::new(1.0, 2.0, 3.0)), ("chin", Point3::new(-1.0, 0.5, 0.0))]).unwrap();
        let back = LandmarkSet::from_json(&s.to_json(), "mem").unwrap();
        assert_eq!(s, back);
        assert!(s.to_json().contains("\"coordinates\""));
    }

    #[test]
    fn polyline_needs_two_points() {
        assert!(Polyline3::new(vec![Point3::origin()]).is_err());
    }

    #[test]
    fn query_on_segment_is_itself() {
        let l = Polyline3::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0), Point3::new(2.0, 2.0, 0.0)]).unwrap();
        let q = Point3::new(2.0, 0.7, 0.0);
        assert_eq!(closest_point_on_polyline(&l, &q), q);
    }

    #[test]
    fn tie_goes_to_first_segment() {
        // V shape: query on the bisector is equidistant from both arms
        let l = Polyline3::new(vec![Point3::new(-1.0, 1.0, 0.0), Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 0.0)]).unwrap();
        let q = Point3::new(0.0, 1.0, 0.0);
        let p = closest_point_on_polyline(&l, &q);
        assert!((p - Point3::new(-0.5, 0.5, 0.0)).norm() < 1e-12, "{p}");
    }

    #[test]
    fn matches_dense_sampling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point3> = (0..6)
            .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        let l = Polyline3::new(pts.clone()).unwrap();
        for _ in 0..50 {
            let q = Point3::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
            let d = (closest_point_on_polyline(&l, &q) - q).norm();
            let mut best = f64::INFINITY;
            for seg in pts.windows(2) {
                let samples = 100_000;
                for k in 0..=samples {
                    let t = k as f64 / samples as f64;
                    best = best.min((seg[0] + (seg[1] - seg[0]) * t - q).norm());
                }
            }
            assert!(d <= best + 1e-12);
            // dense sampling resolution bounds the gap; sampled mismatch ≤ 1e-6 mm
            assert!(best - d <= 1e-6, "{}", best - d);
        }
    }
}
