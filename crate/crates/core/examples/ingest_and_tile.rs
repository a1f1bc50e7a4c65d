//! Parses a GeoJSON layer set, tiles its extent into fixed-size patches and
//! clips every object into the patches it touches.
//!
//! ```text
//! cargo run --example ingest_and_tile -- [vectors.geojson]
//! ```

use segvqa::geom::GeometryKind;
use segvqa::ingest::{assign_objects, objects_extent, parse_vectors, tile_extent, ParseOptions, PatchTemplate};
use segvqa::taxonomy::ClassTaxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_region.geojson").into());
    let tax = ClassTaxonomy::default();
    let objects = parse_vectors(&std::fs::read_to_string(&path)?, &tax, ParseOptions::default())?;
    let extent = objects_extent(&objects).ok_or("no objects")?;
    println!(
        "{} objects, extent {:.0} x {:.0} m",
        objects.len(),
        extent.width(),
        extent.height()
    );

    let template = PatchTemplate::default();
    let specs = tile_extent(extent, template)?;
    println!(
        "{} patches of {} m at {} m/px",
        specs.len(),
        template.side_m,
        template.resolution_m_per_px()
    );
    let patches = assign_objects(&objects, &specs);
    println!(
        "\n{:<12} {:>8} {:>8} {:>6} {:>6}",
        "patch", "polygons", "lines", "points", "total"
    );
    for p in &patches {
        let n = |kinds: &[GeometryKind]| p.objects.iter().filter(|o| kinds.contains(&o.geometry.kind())).count();
        println!(
            "{:<12} {:>8} {:>8} {:>6} {:>6}",
            p.spec.patch_id,
            n(&[GeometryKind::Polygon, GeometryKind::MultiPolygon]),
            n(&[GeometryKind::LineString, GeometryKind::MultiLineString]),
            n(&[GeometryKind::Point]),
            p.objects.len()
        );
    }
    let fragments: usize = patches.iter().map(|p| p.objects.len()).sum();
    println!("\n{fragments} clipped fragments from {} source objects", objects.len());
    Ok(())
}
