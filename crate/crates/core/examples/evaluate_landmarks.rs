//! Per-region landmark errors, as printed by `gpmm eval-landmarks`.

use gpmm::mesh::LandmarkSet;
use gpmm::modelbuild::{evaluate_landmark_sets, RegionMap};
use gpmm::Point3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let regions = RegionMap::from_json(
        r#"{"eye_l_outer": "eyes", "eye_r_outer": "eyes", "nose_tip": "nose",
            "mouth_l": "mouth", "mouth_r": "mouth"}"#,
        "inline",
    )?;
    let truth = LandmarkSet::from_pairs([
        ("eye_l_outer", Point3::new(-45.0, 35.0, 20.0)),
        ("eye_r_outer", Point3::new(45.0, 35.0, 20.0)),
        ("nose_tip", Point3::new(0.0, 0.0, 60.0)),
        ("mouth_l", Point3::new(-25.0, -35.0, 35.0)),
        ("mouth_r", Point3::new(25.0, -35.0, 35.0)),
    ])?;
    let shifted = |dx: f64, dz: f64| truth.map_points(|p| Point3::new(p.x + dx * p.x / 45.0, p.y, p.z + dz));
    let pairs = [(shifted(1.0, 0.5), truth.clone()), (shifted(-0.5, 2.0), truth.clone())];

    let report = evaluate_landmark_sets(&pairs, &regions)?;
    print!("{}", report.to_table());
    println!("{}", serde_json::to_string_pretty(&report.to_json())?);
    Ok(())
}
