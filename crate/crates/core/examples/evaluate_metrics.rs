//! Scores a noisy segmentation against a rasterized reference with the
//! threshold sweep, and computes VQA accuracies for a handful of predictions.
//!
//! ```text
//! cargo run --release --example evaluate_metrics
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segvqa::eval::{self, ScoreMap, Scored};
use segvqa::geom::{Geometry, Point, Polygon, Rect};
use segvqa::ingest::{GeoObject, PatchObjects, PatchSpec};
use segvqa::oracle::QuestionType;
use segvqa::raster::rasterize;
use segvqa::taxonomy::{ClassId, ClassTaxonomy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tax = ClassTaxonomy::default();
    let mut objects = Vec::new();
    for (i, (class, x, y, s)) in [(0u8, 10.0, 10.0, 60.0), (7, 90.0, 40.0, 90.0), (11, 0.0, 170.0, 200.0)]
        .into_iter()
        .enumerate()
    {
        let rect = if class == 11 {
            Rect::new(x, y, x + s, y + 8.0)
        } else {
            Rect::new(x, y, x + s, y + s)
        };
        objects.push(GeoObject {
            id: format!("o{i}"),
            class_id: ClassId(class),
            geometry: Geometry::Polygon(Polygon::rect(rect)),
            name: None,
        });
    }
    let patch = PatchObjects {
        spec: PatchSpec {
            patch_id: "demo".into(),
            row: 0,
            col: 0,
            origin: Point::new(0.0, 200.0),
            side_m: 200.0,
            px: 250,
            resolution_m_per_px: 0.8,
        },
        objects,
    };
    let truth = rasterize(&patch, tax.len() as u32, 4.0);

    // Reference plus uniform noise: positives drift down, negatives up.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let clean = ScoreMap::from_mask(&truth);
    let noisy: Vec<f32> = clean
        .data
        .iter()
        .map(|&v| (0.45 * v + rng.random_range(0.0f32..0.6)).clamp(0.0, 1.0))
        .collect();
    let scores = ScoreMap::new(clean.channels, clean.height, clean.width, noisy);
    let report = eval::threshold_sweep(&[(&scores, &truth)], 20)?;
    let names: Vec<String> = tax.classes().iter().map(|c| c.name.clone()).collect();
    println!("{}", report.table(&names));

    let items = [
        (QuestionType::Presence, "yes", "yes"),
        (QuestionType::Presence, "no", "yes"),
        (QuestionType::Count, "3", " 3 "),
        (QuestionType::AbsLocation, "top-left", "Top-Left"),
        (QuestionType::Distance, "12", "15"),
    ];
    let vqa = eval::vqa_metrics(items.iter().map(|&(qtype, truth, predicted)| Scored {
        qtype,
        truth,
        predicted,
    }));
    println!("{}", vqa.table("demo"));
    println!("types without questions: {:?}", vqa.missing_types);
    Ok(())
}
