//! Generates the balanced question set for the bundled region, splits it by
//! patch and prints the answer-bucket histogram with a few samples.
//!
//! ```text
//! cargo run --release --example generate_questions -- [seed]
//! ```

use segvqa::ingest::{assign_objects, objects_extent, parse_vectors, tile_extent, ParseOptions, PatchTemplate};
use segvqa::oracle::QuestionType;
use segvqa::pipeline::{histogram, histogram_text};
use segvqa::qagen::{self, BalanceConfig, Split};
use segvqa::taxonomy::ClassTaxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let tax = ClassTaxonomy::default();
    let doc = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_region.geojson"))?;
    let objects = parse_vectors(&doc, &tax, ParseOptions::default())?;
    let specs = tile_extent(objects_extent(&objects).ok_or("no objects")?, PatchTemplate::default())?;
    let patches = assign_objects(&objects, &specs);

    let cfg = BalanceConfig {
        seed,
        ..BalanceConfig::default()
    };
    let stream = qagen::candidate_stream(&patches, &tax, &cfg);
    let mut records = qagen::balance(&stream, &cfg);
    println!("{} candidates, {} kept after balancing", stream.len(), records.len());
    let bad = qagen::verify_records(&records, &patches, &tax);
    println!("re-verified against the oracle: {} mismatches", bad.len());

    let ids: Vec<String> = patches.iter().map(|p| p.spec.patch_id.clone()).collect();
    let splits = qagen::split_patches(&ids, [0.6, 0.2, 0.2], seed)?;
    qagen::assign_splits(&mut records, &splits);
    for s in Split::ALL {
        let n = records.iter().filter(|r| r.split == Some(s)).count();
        let p = splits.values().filter(|&&v| v == s).count();
        println!("  {:<5} {p:>2} patches {n:>4} questions", s.as_str());
    }

    println!("\n{}", histogram_text(&histogram(&records)));
    for q in QuestionType::ALL {
        if let Some(r) = records.iter().find(|r| r.qtype == q) {
            println!("[{}] {} -> {}", q.name(), r.question, r.answer);
        }
    }
    Ok(())
}
