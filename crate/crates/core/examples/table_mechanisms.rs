//! The four mechanisms applied to small hand-made histograms.
//!
//! cargo run --example table_mechanisms

use std::collections::BTreeMap;

use dp_insights::mechanisms::{known_gumbel_topk, known_laplace, rt_unknown_gumbel_topk, rte_unknown_laplace_topk};
use dp_insights::{Histogram, Month, PrivacyParams, RandomStream, SliceKey};

fn counts(pairs: &[(&str, i64)]) -> BTreeMap<String, i64> {
    pairs.iter().map(|(e, c)| (e.to_string(), *c)).collect()
}

fn main() -> dp_insights::Result<()> {
    let slice = SliceKey::country(Month::new(2020, 7)?, "US");
    let stream = RandomStream::new(1, 0);

    let hires = counts(&[
        ("acme", 120),
        ("globex", 64),
        ("initech", 41),
        ("hooli", 12),
        ("tiny", 2),
    ]);
    let unknown = Histogram::unknown(slice.clone(), hires.clone(), Some(1));
    let top = rte_unknown_laplace_topk(&unknown, &PrivacyParams::hiring_topk(), stream)?;
    println!("laplace top-k with threshold (counts released):");
    for row in &top.rows {
        println!("  {:<8} {:.2}", row.element, row.noisy_count.unwrap_or(f64::NAN));
    }

    let known = Histogram::known(
        slice.clone(),
        hires.keys().cloned().collect::<Vec<_>>(),
        &hires,
        Some(1),
    );
    let noisy = known_laplace(&known, &PrivacyParams::hiring_companion(), stream.derive("previous"))?;
    println!("known-domain laplace counts:");
    for (e, c) in &noisy {
        println!("  {e:<8} {c:.2}");
    }

    let skills = counts(&[("python", 900), ("sql", 610), ("excel", 300), ("cobol", 40)]);
    let unknown = Histogram::unknown(slice.clone(), skills.clone(), None);
    let top = rt_unknown_gumbel_topk(&unknown, &PrivacyParams::skills_topk(), stream)?;
    println!(
        "gumbel top-k with threshold (rank only): {:?}",
        top.elements().collect::<Vec<_>>()
    );

    let params = PrivacyParams::new(1.0, 0.0, None, 4, 2)?;
    let known = Histogram::known(slice, skills.keys().cloned().collect::<Vec<_>>(), &skills, None);
    let top = known_gumbel_topk(&known, &params, stream)?;
    println!("known-domain gumbel top-2: {:?}", top.elements().collect::<Vec<_>>());
    Ok(())
}
