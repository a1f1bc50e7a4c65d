//! Asks every question type of one hand-built scene and prints the answers
//! computed from geometry.
//!
//! ```text
//! cargo run --example answer_oracle
//! ```

use segvqa::geom::{Geometry, Point, Polygon, Rect};
use segvqa::ingest::{GeoObject, PatchObjects, PatchSpec};
use segvqa::oracle::{self, Anchor};
use segvqa::taxonomy::ClassTaxonomy;

fn object(id: &str, class: segvqa::taxonomy::ClassId, geometry: Geometry) -> GeoObject {
    GeoObject {
        id: id.into(),
        class_id: class,
        geometry,
        name: None,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tax = ClassTaxonomy::default();
    let building = tax.by_name("Building").ok_or("no building class")?;
    let road = tax.by_name("Road").ok_or("no road class")?;
    let pylon = tax.by_name("Pylon").ok_or("no pylon class")?;
    let patch = PatchObjects {
        spec: PatchSpec {
            patch_id: "demo".into(),
            row: 0,
            col: 0,
            origin: Point::new(0.0, 200.0),
            side_m: 200.0,
            px: 1000,
            resolution_m_per_px: 0.2,
        },
        objects: vec![
            object(
                "hall",
                building,
                Geometry::Polygon(Polygon::rect(Rect::new(20.0, 20.0, 60.0, 50.0))),
            ),
            object(
                "shed",
                building,
                Geometry::Polygon(Polygon::rect(Rect::new(150.0, 140.0, 170.0, 160.0))),
            ),
            object(
                "main st",
                road,
                Geometry::LineString(vec![Point::new(0.0, 100.0), Point::new(200.0, 100.0)]),
            ),
            object("pylon-1", pylon, Geometry::Point(Point::new(40.0, 120.0))),
        ],
    };
    let hall = patch.object("hall").unwrap();
    let shed = patch.object("shed").unwrap();
    let names = |id| tax.class(id).plural();

    println!(
        "presence of {}: {}",
        names(pylon),
        oracle::presence(&patch, pylon).value
    );
    println!(
        "count of {}: {}",
        names(building),
        oracle::count(&patch, building).value
    );
    println!(
        "density of {}: {}",
        names(building),
        oracle::density(&patch, building).value
    );
    println!("location of hall: {}", oracle::object_location(hall, 200.0)?.as_str());
    println!("area of hall: {} m²", oracle::area(hall)?.value);
    println!(
        "more {} than {}? {}",
        names(building),
        names(pylon),
        oracle::compare_counts(&patch, building, pylon)?.value
    );
    println!("hall relative to shed: {}", oracle::rel_location(hall, shed)?.as_str());
    println!("distance hall-shed: {} m", oracle::distance(hall, shed).value);
    let anchor = Anchor::Object("pylon-1".into());
    let near = oracle::nearest_object(&patch, building, &anchor)?;
    println!(
        "building nearest the pylon: {} (located {})",
        near.id,
        oracle::nearest(&patch, building, &anchor)?.as_str()
    );
    Ok(())
}
