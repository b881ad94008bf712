//! Closest-point queries over a triangle mesh through an AABB tree.

use std::collections::HashSet;

use super::{edge_key, TriangleMesh};
use crate::{Error, Point3, Result, Vec3};

/// Closest point on a surface, expressed both in space and barycentrically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub point: Point3,
    pub triangle: usize,
    pub barycentric: [f64; 3],
    /// Set when the closest point lies on a boundary edge or boundary vertex.
    pub on_boundary: bool,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn distance_sq(&self, p: &Vec3) -> f64 {
        let d = (self.min - p).sup(&(p - self.max)).sup(&Vec3::zeros());
        d.norm_squared()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Axis-aligned bounding-volume tree over the triangles of one mesh.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let v = mesh.vertices();
        let centroids: Vec<Vec3> = mesh
            .triangles()
            .iter()
            .map(|t| (v[t[0]].coords + v[t[1]].coords + v[t[2]].coords) / 3.0)
            .collect();
        let mut bvh = Bvh { nodes: Vec::new(), order: (0..mesh.triangle_count()).collect() };
        if !centroids.is_empty() {
            let n = centroids.len();
            bvh.build_node(mesh, &centroids, 0, n);
        }
        bvh
    }

    fn build_node(&mut self, mesh: &TriangleMesh, centroids: &[Vec3], start: usize, end: usize) -> usize {
        let v = mesh.vertices();
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &t in &self.order[start..end] {
            for &i in &mesh.triangles()[t] {
                bounds.grow(&v[i].coords);
            }
            cbounds.grow(&centroids[t]);
        }
        let slot = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, end });
            return slot;
        }
        self.nodes.push(Node::Leaf { bounds, start, end });
        let extent = cbounds.max - cbounds.min;
        let axis = extent.imax();
        let mid = (start + end) / 2;
        // stable ordering on ties keeps the tree independent of sort internals
        self.order[start..end].sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let left = self.build_node(mesh, centroids, start, mid);
        let right = self.build_node(mesh, centroids, mid, end);
        self.nodes[slot] = Node::Inner { bounds, left, right };
        slot
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feature {
    Vertex(usize),
    Edge(usize, usize),
    Face,
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection §5.1.5). Returns barycentric weights and the feature hit.
fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> ([f64; 3], Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ([1.0, 0.0, 0.0], Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return ([0.0, 1.0, 0.0], Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let w = d1 / (d1 - d3);
        return ([1.0 - w, w, 0.0], Feature::Edge(0, 1));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return ([0.0, 0.0, 1.0], Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return ([1.0 - w, 0.0, w], Feature::Edge(0, 2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return ([0.0, 1.0 - w, w], Feature::Edge(1, 2));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    ([1.0 - v - w, v, w], Feature::Face)
}

/// A mesh together with its spatial index and boundary information.
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct Surface {
    mesh: TriangleMesh,
    bvh: Bvh,
    boundary_edges: HashSet<(usize, usize)>,
    boundary_vertex: Vec<bool>,
}

impl Surface {
    pub fn new(mesh: TriangleMesh) -> Self {
        let bvh = Bvh::build(&mesh);
        let boundary_edges: HashSet<_> =
            mesh.edge_use_counts().into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
        let mut boundary_vertex = vec![false; mesh.vertex_count()];
        for &(a, b) in &boundary_edges {
            boundary_vertex[a] = true;
            boundary_vertex[b] = true;
        }
        Self { mesh, bvh, boundary_edges, boundary_vertex }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    fn candidate(&self, tri: usize, q: &Vec3) -> (f64, [f64; 3], Feature) {
        let t = self.mesh.triangles()[tri];
        let v = self.mesh.vertices();
        let (bary, feature) = closest_on_triangle(q, &v[t[0]].coords, &v[t[1]].coords, &v[t[2]].coords);
        let p = v[t[0]].coords * bary[0] + v[t[1]].coords * bary[1] + v[t[2]].coords * bary[2];
        ((p - q).norm_squared(), bary, feature)
    }

    fn finish(&self, tri: usize, d2: f64, bary: [f64; 3], feature: Feature) -> SurfacePoint {
        let t = self.mesh.triangles()[tri];
        let v = self.mesh.vertices();
        let point = Point3::from(v[t[0]].coords * bary[0] + v[t[1]].coords * bary[1] + v[t[2]].coords * bary[2]);
        let on_boundary = match feature {
            Feature::Vertex(k) => self.boundary_vertex[t[k]],
            Feature::Edge(i, j) => self.boundary_edges.contains(&edge_key(t[i], t[j])),
            Feature::Face => false,
        };
        SurfacePoint { point, triangle: tri, barycentric: bary, on_boundary, distance: d2.sqrt() }
    }

    /// Closest point over all triangles. Equal distances resolve to the
    /// lowest triangle index.
    pub fn closest_point(&self, query: &Point3) -> Result<SurfacePoint> {
        if self.mesh.is_empty() {
            return Err(Error::InvalidMesh("closest point query on a mesh without triangles".into()));
        }
        let q = query.coords;
        let mut best = (f64::INFINITY, usize::MAX, [0.0; 3], Feature::Face);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.bvh.nodes[n];
            if node.bounds().distance_sq(&q) > best.0 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &tri in &self.bvh.order[start..end] {
                        let (d2, bary, feature) = self.candidate(tri, &q);
                        if d2 < best.0 || (d2 == best.0 && tri < best.1) {
                            best = (d2, tri, bary, feature);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.bvh.nodes[left].bounds().distance_sq(&q);
                    let dr = self.bvh.nodes[right].bounds().distance_sq(&q);
                    // nearer child is popped first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        Ok(self.finish(best.1, best.0, best.2, best.3))
    }

    /// Reference implementation that visits every triangle.
    pub fn closest_point_brute_force(&self, query: &Point3) -> Result<SurfacePoint> {
        if self.mesh.is_empty() {
            return Err(Error::InvalidMesh("closest point query on a mesh without triangles".into()));
        }
        let q = query.coords;
        let mut best = (f64::INFINITY, usize::MAX, [0.0; 3], Feature::Face);
        for tri in 0..self.mesh.triangle_count() {
            let (d2, bary, feature) = self.candidate(tri, &q);
            if d2 < best.0 {
                best = (d2, tri, bary, feature);
            }
        }
        Ok(self.finish(best.1, best.0, best.2, best.3))
    }
}
