//! Attention ablation on a small presence task: guided attention, guided
//! attention with a zeroed guide, and uniform pooling. Prints validation
//! accuracy for each and the learned glimpse for one question.
//!
//! ```text
//! cargo run --release --example attention_glimpse
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use segvqa::geom::{Geometry, Point, Polygon, Rect};
use segvqa::ingest::{GeoObject, PatchObjects, PatchSpec};
use segvqa::nnet::features::{seg_features, stub_text_features, MaskVisualProvider};
use segvqa::nnet::train::{accuracy, fit, initial_params};
use segvqa::nnet::{attention_forward, AttentionMode, FeatureBundle, Mode, ModelDims, Sample, Tensor, TrainConfig};
use segvqa::oracle;
use segvqa::qagen::AnswerVocabulary;
use segvqa::raster::rasterize;
use segvqa::taxonomy::{ClassId, ClassTaxonomy};

const CLASSES: [u8; 4] = [0, 3, 4, 5];

fn scenes(n: usize, seed: u64) -> Vec<PatchObjects> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut objects = Vec::new();
            for &c in &CLASSES {
                if rng.random_bool(0.5) {
                    let s = rng.random_range(6.0..14.0);
                    let (x, y) = (rng.random_range(5.0..190.0 - s), rng.random_range(5.0..190.0 - s));
                    objects.push(GeoObject {
                        id: format!("c{c}"),
                        class_id: ClassId(c),
                        geometry: Geometry::Polygon(Polygon::rect(Rect::new(x, y, x + s, y + s))),
                        name: None,
                    });
                }
            }
            PatchObjects {
                spec: PatchSpec {
                    patch_id: format!("s{i:04}"),
                    row: 0,
                    col: 0,
                    origin: Point::new(0.0, 200.0),
                    side_m: 200.0,
                    px: 200,
                    resolution_m_per_px: 1.0,
                },
                objects,
            }
        })
        .collect()
}

fn samples(patches: &[PatchObjects], tax: &ClassTaxonomy, d: &ModelDims, zero_guide: bool) -> Vec<(Sample, String)> {
    let visual = MaskVisualProvider::new(d.c_v, d.c_s, 0.5, 1);
    patches
        .par_iter()
        .flat_map_iter(|p| {
            let guide = seg_features(&rasterize(p, d.c_s as u32, 4.0), d.h, d.w).unwrap();
            let f_vhr = visual.features(&guide, &p.spec.patch_id);
            let f_seg = if zero_guide {
                Tensor::zeros(guide.shape())
            } else {
                guide
            };
            CLASSES
                .iter()
                .map(|&c| {
                    let q = format!("Is there a {} in the image?", tax.class(ClassId(c)).singular());
                    let yes = oracle::presence(p, ClassId(c)).value == "yes";
                    let bundle = FeatureBundle {
                        f_vhr: f_vhr.clone(),
                        f_q: stub_text_features(&q, d.d_q, 1),
                        f_seg: f_seg.clone(),
                    };
                    (
                        Sample {
                            bundle,
                            target: usize::from(!yes),
                        },
                        q,
                    )
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tax = ClassTaxonomy::default();
    let vocab = AnswerVocabulary::from_entries(vec![("yes".into(), 1), ("no".into(), 1)]);
    let (train_p, val_p) = (scenes(300, 11), scenes(100, 12));
    let base = ModelDims {
        c_v: 32,
        d_q: 32,
        att_dim: 64,
        mlp_hidden: 64,
        k: 2,
        ..ModelDims::default()
    };
    let cfg = TrainConfig {
        epochs: usize::MAX,
        lr: 1e-3,
        batch_size: 4,
        seed: 1,
        max_steps: Some(1500),
    };

    let mut guided = None;
    for (label, mode, zero) in [
        ("guided", AttentionMode::Guided, false),
        ("guided, zeroed guide", AttentionMode::Guided, true),
        ("uniform pooling", AttentionMode::Uniform, false),
    ] {
        let d = ModelDims {
            attention: mode,
            ..base
        };
        let train: Vec<Sample> = samples(&train_p, &tax, &d, zero).into_iter().map(|s| s.0).collect();
        let val = samples(&val_p, &tax, &d, zero);
        let val_only: Vec<Sample> = val.iter().map(|s| s.0.clone()).collect();
        let mut p = initial_params(&d, &vocab, cfg.seed);
        fit(&mut p, &d, &train, &[], &cfg)?;
        println!("{label:<22} val accuracy {:.1}%", 100.0 * accuracy(&p, &d, &val_only)?);
        if guided.is_none() {
            guided = Some((p, d, val));
        }
    }

    let (p, d, val) = guided.unwrap();
    let (sample, question) = val.iter().find(|s| s.0.target == 0).ok_or("no positive sample")?;
    let (_, glimpse) = attention_forward(&p, &d, &sample.bundle, Mode::Eval)?;
    println!("\nglimpse for \"{question}\" (answer yes), x1000:");
    for r in 0..d.h {
        let row: Vec<String> = (0..d.w).map(|c| format!("{:4.0}", 1000.0 * glimpse.at(r, c))).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
