//! Loads the class taxonomy from TOML and shows how names, groups and
//! source layers map onto mask channels.
//!
//! ```text
//! cargo run --example taxonomy_config -- [taxonomy.toml]
//! ```

use segvqa::taxonomy::{load_taxonomy, ClassTaxonomy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/taxonomy.toml").into());
    let tax = load_taxonomy(Some(&std::fs::read_to_string(&path)?))?;
    println!("{} classes from {path}", tax.len());
    println!("{:>3}  {:<28} {:<30} {:<32} group", "ch", "name", "singular", "plural");
    for c in tax.classes() {
        println!(
            "{:>3}  {:<28} {:<30} {:<32} {}",
            c.id,
            c.name,
            c.singular(),
            c.plural(),
            c.group
        );
    }

    println!("\nlayer aliases:");
    for (layer, id) in tax.layer_map() {
        if tax.by_name(layer) != Some(*id) {
            println!("  {layer:<26} -> {}", tax.class(*id).name);
        }
    }

    let reparsed = ClassTaxonomy::from_toml(&tax.to_toml())?;
    println!("\nTOML round-trip preserves the taxonomy: {}", reparsed == tax);
    println!("matches built-in default: {}", tax == ClassTaxonomy::default());
    Ok(())
}
