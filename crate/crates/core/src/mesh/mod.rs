//! Triangle meshes, PLY I/O, closest-point queries and rigid pre-alignment.

mod align;
mod landmarks;
pub mod ply;
mod surface;

use std::collections::HashMap;
use std::path::Path;

pub use align::{rigid_align, SimilarityTransform};
pub use landmarks::{closest_point_on_polyline, load_polyline, save_polyline, Landmark, LandmarkSet, Polyline3};
pub use ply::PlyFormat;
pub use surface::{Bvh, Surface, SurfacePoint};

use crate::{Error, Point3, Result, Rgb};

/// Vertex/face surface with optional per-vertex color.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    colors: Option<Vec<Rgb>>,
}

impl TriangleMesh {
    /// Builds a mesh, rejecting out-of-range indices, zero-area triangles and
    /// color lists that do not match the vertex count.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>, colors: Option<Vec<Rgb>>) -> Result<Self> {
        let n = vertices.len();
        for (f, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {f}: vertex index {bad} out of range ({n} vertices)"
                )));
            }
            if tri_area(&vertices, tri) <= 0.0 {
                return Err(Error::InvalidMesh(format!("face {f}: degenerate triangle {tri:?}")));
            }
        }
        if let Some(c) = &colors {
            if c.len() != n {
                return Err(Error::InvalidMesh(format!("{} colors for {n} vertices", c.len())));
            }
        }
        Ok(Self { vertices, triangles, colors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ply::load_mesh(path)
    }

    /// Writes binary little-endian PLY.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        ply::save_mesh(self, path, PlyFormat::BinaryLittleEndian, &[])
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Same topology with new vertex positions. Positions are not re-checked
    /// for degeneracy: deformed instances may legitimately fold.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch { expected: self.vertices.len(), actual: vertices.len() });
        }
        Ok(Self { vertices, triangles: self.triangles.clone(), colors: self.colors.clone() })
    }

    pub fn with_colors(&self, colors: Option<Vec<Rgb>>) -> Result<Self> {
        if let Some(c) = &colors {
            if c.len() != self.vertices.len() {
                return Err(Error::DimensionMismatch { expected: self.vertices.len(), actual: c.len() });
            }
        }
        Ok(Self { vertices: self.vertices.clone(), triangles: self.triangles.clone(), colors })
    }

    /// Keeps only the listed triangles. Vertices are left in place so vertex
    /// indices stay comparable with the original.
    pub fn retain_triangles(&self, mut keep: impl FnMut(usize, &[usize; 3]) -> bool) -> Self {
        let triangles = self
            .triangles
            .iter()
            .enumerate()
            .filter(|(i, t)| keep(*i, t))
            .map(|(_, t)| *t)
            .collect();
        Self { vertices: self.vertices.clone(), triangles, colors: self.colors.clone() }
    }

    pub fn transformed(&self, transform: &SimilarityTransform) -> Self {
        let vertices = self.vertices.iter().map(|p| transform.apply(p)).collect();
        Self { vertices, triangles: self.triangles.clone(), colors: self.colors.clone() }
    }

    /// True when both meshes have the same vertex count and triangle list.
    pub fn same_topology(&self, other: &TriangleMesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.triangles == other.triangles
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_use_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                *counts.entry(edge_key(tri[e], tri[(e + 1) % 3])).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Vertices incident to an edge used by exactly one triangle, ascending.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut on_boundary = vec![false; self.vertices.len()];
        for ((a, b), count) in self.edge_use_counts() {
            if count == 1 {
                on_boundary[a] = true;
                on_boundary[b] = true;
            }
        }
        on_boundary.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn centroid(&self) -> Point3 {
        let sum = self.vertices.iter().fold(crate::Vec3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.vertices.len().max(1) as f64)
    }
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn tri_area(vertices: &[Point3], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|i| vertices[i]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    ply::load_mesh(path)
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    mesh.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn single_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = TriangleMesh::new(vec![Point3::origin(); 3], vec![[0, 1, 7]], None).unwrap_err();
        assert!(err.to_string().contains("face 0"), "{err}");
    }

    #[test]
    fn rejects_degenerate_triangle() {
        let v = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        assert!(TriangleMesh::new(v, vec![[0, 1, 2]], None).is_err());
    }

    #[test]
    fn rejects_color_length_mismatch() {
        let m = single_triangle();
        assert!(m.with_colors(Some(vec![[0.0; 3]; 2])).is_err());
    }

    #[test]
    fn tetrahedron_has_no_boundary() {
        assert!(synthetic::tetrahedron().boundary_vertices().is_empty());
    }

    #[test]
    fn single_triangle_is_all_boundary() {
        assert_eq!(single_triangle().boundary_vertices(), vec![0, 1, 2]);
    }

    #[test]
    fn sphere_with_removed_face_exposes_its_vertices() {
        let sphere = synthetic::icosphere(10.0, 2);
        assert!(sphere.boundary_vertices().is_empty());
        let removed = sphere.triangles()[5];
        let holed = sphere.retain_triangles(|i, _| i != 5);
        // edge-count oracle: count uses directly
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for t in holed.triangles() {
            for e in 0..3 {
                let (a, b) = (t[e].min(t[(e + 1) % 3]), t[e].max(t[(e + 1) % 3]));
                *counts.entry((a, b)).or_default() += 1;
            }
        }
        let mut expected: Vec<usize> =
            counts.iter().filter(|(_, &c)| c == 1).flat_map(|(&(a, b), _)| [a, b]).collect();
        expected.sort_unstable();
        expected.dedup();
        let mut face = removed.to_vec();
        face.sort_unstable();
        assert_eq!(expected, face);
        assert_eq!(holed.boundary_vertices(), face);
    }
}
