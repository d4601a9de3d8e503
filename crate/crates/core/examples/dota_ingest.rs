//! Parse a DOTA annotation file and convert it to oriented ground truths.
//!
//! cargo run --example dota_ingest -- path/to/labelTxt/P0001.txt

use std::path::PathBuf;

use obb_assign::scene::{read_dota_file, records_to_gts, CategoryTable, UnknownCategory};

fn main() -> obb_assign::Result<()> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/tests/fixtures/dota_50.txt"
            ))
        });
    let parsed = read_dota_file(&path)?;
    println!(
        "{}: {} records, {} metadata lines",
        path.display(),
        parsed.records.len(),
        parsed.metadata_lines
    );
    for e in &parsed.errors {
        println!("  skipped: {e}");
    }

    let records: Vec<_> = parsed.records.iter().map(|(_, r)| r.clone()).collect();
    let conv = records_to_gts(
        &records,
        false,
        &CategoryTable::dota(),
        UnknownCategory::PassThrough,
    )?;
    println!(
        "{} boxes ({} difficult, {} degenerate skipped)",
        conv.gts.len(),
        conv.skipped_difficult,
        conv.skipped_degenerate
    );
    for (g, &src) in conv.gts.iter().zip(&conv.source).take(8) {
        let line = parsed.records[src].0;
        let b = g.bbox;
        println!(
            "  line {line:>3} {:<18} cx={:>7.1} cy={:>7.1} w={:>6.1} h={:>6.1} theta={:+.3}",
            conv.categories.name(g.class_id).unwrap_or("?"),
            b.cx,
            b.cy,
            b.w,
            b.h,
            b.theta
        );
    }
    Ok(())
}
