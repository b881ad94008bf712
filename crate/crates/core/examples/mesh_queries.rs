//! Closest-point queries, boundaries and PLY round trips.

use gpmm::mesh::{ply, PlyFormat, Surface, TriangleMesh};
use gpmm::{synthetic, Point3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sphere = Surface::new(synthetic::icosphere(30.0, 3));
    println!("icosphere: {} vertices, {} triangles", sphere.mesh().vertex_count(), sphere.mesh().triangle_count());

    for q in [Point3::new(0.0, 0.0, 45.0), Point3::new(5.0, -3.0, 1.0), Point3::new(100.0, 20.0, -7.0)] {
        let fast = sphere.closest_point(&q)?;
        let slow = sphere.closest_point_brute_force(&q)?;
        println!(
            "query {:?}: distance {:.4} mm on triangle {} (brute force {:.4})",
            q.coords.as_slice(),
            fast.distance,
            fast.triangle,
            slow.distance
        );
    }

    // cut a cap off and look at the rim
    let cut = synthetic::compact(&sphere.mesh().retain_triangles(|_, t| {
        t.iter().all(|&v| sphere.mesh().vertices()[v].z < 20.0)
    }));
    let rim = cut.boundary_vertices();
    println!("cut sphere: {} boundary vertices", rim.len());
    let open = Surface::new(cut.clone());
    let above = open.closest_point(&Point3::new(0.0, 0.0, 60.0))?;
    println!("point above the hole projects onto the rim: {}", above.on_boundary);

    let colors = cut.vertices().iter().map(|p| [0.5 + p.x / 60.0, 0.5, 0.5 - p.z / 60.0]).collect();
    let painted = synthetic::round_to_f32(&cut).with_colors(Some(colors))?;
    let bytes = ply::ply_bytes(&painted, PlyFormat::BinaryLittleEndian, &["cut sphere".into()]);
    let back: TriangleMesh = ply::parse_ply(&bytes, "memory")?;
    println!(
        "binary PLY: {} bytes, vertices identical: {}",
        bytes.len(),
        back.vertices() == painted.vertices()
    );
    Ok(())
}
