//! Rasterizes one patch of the bundled region into a 16-channel mask,
//! reports per-class coverage and writes the mask (MCM1) plus a PGM preview
//! of the busiest channel.
//!
//! ```text
//! cargo run --example rasterize_patch -- [output_dir]
//! ```

use std::path::PathBuf;

use segvqa::ingest::{assign_objects, objects_extent, parse_vectors, tile_extent, ParseOptions, PatchTemplate};
use segvqa::raster::{rasterize, read_mask, write_mask, write_pgm};
use segvqa::taxonomy::ClassTaxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("segvqa_raster"));
    let tax = ClassTaxonomy::default();
    let doc = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_region.geojson"))?;
    let objects = parse_vectors(&doc, &tax, ParseOptions::default())?;
    let specs = tile_extent(objects_extent(&objects).ok_or("no objects")?, PatchTemplate::default())?;
    let patches = assign_objects(&objects, &specs);
    let patch = patches.iter().max_by_key(|p| p.objects.len()).ok_or("no patches")?;

    let mask = rasterize(patch, tax.len() as u32, 4.0);
    let total = (mask.width() * mask.height()) as f64;
    println!(
        "patch {} ({} objects), {}x{} px",
        patch.spec.patch_id,
        patch.objects.len(),
        mask.width(),
        mask.height()
    );
    let mut busiest = 0;
    for c in tax.classes() {
        let ones = mask.count_ones(c.id.0 as u32);
        if ones > mask.count_ones(busiest) {
            busiest = c.id.0 as u32;
        }
        if ones > 0 {
            println!("  {:<22} {:>7} px  {:>6.2}%", c.name, ones, 100.0 * ones as f64 / total);
        }
    }

    std::fs::create_dir_all(&out)?;
    let bytes = write_mask(&mask);
    assert_eq!(read_mask(&bytes)?, mask);
    let mcm = out.join(format!("{}.mcm", patch.spec.patch_id));
    let pgm = out.join(format!("{}_ch{busiest}.pgm", patch.spec.patch_id));
    std::fs::write(&mcm, &bytes)?;
    std::fs::write(&pgm, write_pgm(&mask, busiest))?;
    println!("wrote {} ({} bytes) and {}", mcm.display(), bytes.len(), pgm.display());
    Ok(())
}
