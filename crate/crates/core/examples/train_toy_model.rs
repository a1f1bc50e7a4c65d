//! Trains the attention model on the bundled region's train split, saves and
//! reloads the checkpoint, and answers a few validation questions.
//!
//! ```text
//! cargo run --release --example train_toy_model -- [epochs]
//! ```

use std::collections::HashMap;

use segvqa::ingest::{assign_objects, objects_extent, parse_vectors, tile_extent, ParseOptions, PatchTemplate};
use segvqa::nnet::features::{seg_features, stub_text_features, MaskVisualProvider};
use segvqa::nnet::train::{infer, train};
use segvqa::nnet::{Checkpoint, FeatureBundle, ModelDims, Sample, Tensor, TrainConfig};
use segvqa::qagen::{self, BalanceConfig, QaRecord, Split};
use segvqa::raster::rasterize;
use segvqa::taxonomy::ClassTaxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let seed = 7;
    let tax = ClassTaxonomy::default();
    let doc = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_region.geojson"))?;
    let objects = parse_vectors(&doc, &tax, ParseOptions::default())?;
    let specs = tile_extent(objects_extent(&objects).ok_or("no objects")?, PatchTemplate::default())?;
    let patches = assign_objects(&objects, &specs);
    let mut records = qagen::generate(
        &patches,
        &tax,
        &BalanceConfig {
            seed,
            ..BalanceConfig::default()
        },
    );
    let ids: Vec<String> = patches.iter().map(|p| p.spec.patch_id.clone()).collect();
    qagen::assign_splits(&mut records, &qagen::split_patches(&ids, [0.6, 0.2, 0.2], seed)?);

    let dims = ModelDims::default();
    let visual = MaskVisualProvider::new(dims.c_v, dims.c_s, 0.5, seed);
    let guides: HashMap<&str, Tensor> = patches
        .iter()
        .map(|p| {
            let g = seg_features(&rasterize(p, dims.c_s as u32, 4.0), dims.h, dims.w).unwrap();
            (p.spec.patch_id.as_str(), g)
        })
        .collect();
    let bundle = |r: &QaRecord| {
        let g = &guides[r.patch_id.as_str()];
        FeatureBundle {
            f_vhr: visual.features(g, &r.patch_id),
            f_q: stub_text_features(&r.question, dims.d_q, seed),
            f_seg: g.clone(),
        }
    };
    let of_split = |s| records.iter().filter(move |r| r.split == Some(s));
    let train_records: Vec<QaRecord> = of_split(Split::Train).cloned().collect();
    let vocab = qagen::build_vocabulary(&train_records, qagen::MAX_VOCABULARY);
    let to_samples = |rs: Vec<&QaRecord>| -> Vec<Sample> {
        rs.into_iter()
            .filter_map(|r| {
                vocab.index_of(&r.answer).map(|target| Sample {
                    bundle: bundle(r),
                    target,
                })
            })
            .collect()
    };
    let train_set = to_samples(train_records.iter().collect());
    let val_set = to_samples(of_split(Split::Val).collect());
    println!(
        "{} train / {} val samples, {} answers",
        train_set.len(),
        val_set.len(),
        vocab.len()
    );

    let cfg = TrainConfig {
        epochs,
        lr: 1e-3,
        batch_size: 4,
        seed,
        max_steps: None,
    };
    let (ckpt, history) = train(&train_set, &val_set, dims, vocab, &cfg)?;
    for h in &history {
        println!(
            "epoch {:>2}  steps {:>4}  loss {:.4}  val acc {:.1}%",
            h.epoch,
            h.steps,
            h.mean_loss,
            100.0 * h.val_accuracy.unwrap_or(0.0)
        );
    }

    let bytes = ckpt.to_bytes();
    let restored = Checkpoint::from_bytes(&bytes)?;
    println!(
        "checkpoint: {} bytes, {} parameters, reload identical: {}",
        bytes.len(),
        restored.params.count(),
        restored == ckpt
    );
    for r in of_split(Split::Val).step_by(23).take(6) {
        println!(
            "  {:<70} truth {:<12} model {}",
            r.question,
            r.answer,
            infer(&restored, &bundle(r))?
        );
    }
    Ok(())
}
