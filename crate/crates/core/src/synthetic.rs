//! Procedural meshes used by the examples and test suites.

use std::collections::HashMap;

use crate::mesh::TriangleMesh;
use crate::{Point3, Vec3};

pub fn tetrahedron() -> TriangleMesh {
    let v = vec![
        Point3::new(1.0, 1.0, 1.0),
        Point3::new(1.0, -1.0, -1.0),
        Point3::new(-1.0, 1.0, -1.0),
        Point3::new(-1.0, -1.0, 1.0),
    ];
    let t = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriangleMesh::new(v, t, None).expect("valid tetrahedron")
}

/// Subdivided icosahedron: 12, 42, 162, 642, 2562 … vertices.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let points = verts.into_iter().map(|v| Point3::from(v * radius)).collect();
    TriangleMesh::new(points, faces, None).expect("valid icosphere")
}

/// Latitude/longitude sphere with `(rings - 1) * segments + 2` vertices.
pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> TriangleMesh {
    assert!(rings >= 2 && segments >= 3);
    let mut v = vec![Point3::new(0.0, 0.0, radius)];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            v.push(Point3::new(radius * theta.sin() * phi.cos(), radius * theta.sin() * phi.sin(), radius * theta.cos()));
        }
    }
    v.push(Point3::new(0.0, 0.0, -radius));
    let south = v.len() - 1;
    let idx = |r: usize, s: usize| 1 + (r - 1) * segments + (s % segments);
    let mut t = Vec::new();
    for s in 0..segments {
        t.push([0, idx(1, s), idx(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            t.push([idx(r, s), idx(r + 1, s), idx(r + 1, s + 1)]);
            t.push([idx(r, s), idx(r + 1, s + 1), idx(r, s + 1)]);
        }
    }
    for s in 0..segments {
        t.push([south, idx(rings - 1, s + 1), idx(rings - 1, s)]);
    }
    TriangleMesh::new(v, t, None).expect("valid uv sphere")
}

/// Upper half (z ≥ 0) of an icosphere; open along the equator.
pub fn hemisphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let sphere = icosphere(radius, subdivisions);
    let v = sphere.vertices().to_vec();
    compact(&sphere.retain_triangles(|_, t| t.iter().all(|&i| v[i].z >= -1e-9)))
}

/// Sphere whose radius is modulated by a smooth bump pattern, giving a
/// surface where closest-point matching constrains tangential motion.
pub fn bumpy_sphere(radius: f64, amplitude: f64, subdivisions: usize) -> TriangleMesh {
    let sphere = icosphere(1.0, subdivisions);
    let v = sphere
        .vertices()
        .iter()
        .map(|p| {
            let (x, y, z) = (p.x, p.y, p.z);
            let bump = (3.0 * x).sin() * (2.0 * y).cos() + 0.7 * (4.0 * z + 1.0).sin() * (2.5 * x).cos() + 0.5 * (5.0 * y * z).sin();
            Point3::from(p.coords * radius * (1.0 + amplitude * bump))
        })
        .collect();
    sphere.with_vertices(v).expect("same vertex count")
}

/// Regular grid in the z = 0 plane centered on the origin.
pub fn grid(nx: usize, ny: usize, spacing: f64) -> TriangleMesh {
    assert!(nx >= 2 && ny >= 2);
    let (ox, oy) = ((nx - 1) as f64 * spacing / 2.0, (ny - 1) as f64 * spacing / 2.0);
    let mut v = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            v.push(Point3::new(i as f64 * spacing - ox, j as f64 * spacing - oy, 0.0));
        }
    }
    let mut t = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            t.push([a, a + 1, a + nx + 1]);
            t.push([a, a + nx + 1, a + nx]);
        }
    }
    TriangleMesh::new(v, t, None).expect("valid grid")
}

/// Toy mouth region: two lip strips separated by a narrow slit, joined at
/// the mouth corners. Returns the mesh and a per-vertex flag marking the
/// lower lip (the part that moves when the jaw opens).
pub fn jaw(columns: usize, rows_per_lip: usize, spacing: f64, gap: f64) -> (TriangleMesh, Vec<bool>) {
    assert!(columns >= 3 && rows_per_lip >= 2);
    let width = (columns - 1) as f64 * spacing;
    let mut v = Vec::new();
    let mut lower = Vec::new();
    // upper lip rows from the slit upwards, lower lip rows downwards
    for (is_lower, sign) in [(false, 1.0), (true, -1.0)] {
        for r in 0..rows_per_lip {
            for c in 0..columns {
                let x = c as f64 * spacing - width / 2.0;
                let y = sign * (gap / 2.0 + r as f64 * spacing);
                // slight curvature so the strip is not planar
                let z = -0.002 * x * x;
                v.push(Point3::new(x, y, z));
                lower.push(is_lower);
            }
        }
    }
    let idx = |lip: usize, r: usize, c: usize| lip * rows_per_lip * columns + r * columns + c;
    let mut t = Vec::new();
    for lip in 0..2 {
        for r in 0..rows_per_lip - 1 {
            for c in 0..columns - 1 {
                let (a, b, cc, d) = (idx(lip, r, c), idx(lip, r, c + 1), idx(lip, r + 1, c + 1), idx(lip, r + 1, c));
                if lip == 0 {
                    t.push([a, b, cc]);
                    t.push([a, cc, d]);
                } else {
                    t.push([a, cc, b]);
                    t.push([a, d, cc]);
                }
            }
        }
    }
    // mouth corners bridge the slit
    for c in [0, columns - 2] {
        let (u0, u1, l0, l1) = (idx(0, 0, c), idx(0, 0, c + 1), idx(1, 0, c), idx(1, 0, c + 1));
        t.push([l0, l1, u1]);
        t.push([l0, u1, u0]);
    }
    (TriangleMesh::new(v, t, None).expect("valid jaw"), lower)
}

/// Drops vertices not referenced by any triangle.
pub fn compact(mesh: &TriangleMesh) -> TriangleMesh {
    let mut map = vec![usize::MAX; mesh.vertex_count()];
    let mut v = Vec::new();
    let mut colors = mesh.colors().map(|_| Vec::new());
    for t in mesh.triangles() {
        for &i in t {
            if map[i] == usize::MAX {
                map[i] = v.len();
                v.push(mesh.vertices()[i]);
                if let (Some(out), Some(src)) = (colors.as_mut(), mesh.colors()) {
                    out.push(src[i]);
                }
            }
        }
    }
    let t = mesh.triangles().iter().map(|t| t.map(|i| map[i])).collect();
    TriangleMesh::new(v, t, colors).expect("compaction keeps validity")
}

/// Rounds every coordinate to the nearest `f32`, so binary PLY round trips
/// are exact.
pub fn round_to_f32(mesh: &TriangleMesh) -> TriangleMesh {
    let v = mesh.vertices().iter().map(|p| p.map(|c| c as f32 as f64)).collect();
    mesh.with_vertices(v).expect("same vertex count")
}
