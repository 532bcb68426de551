//! Screens census variables against a cluster labelling. Two of the ten
//! variables carry a real cluster effect.

use vulnscape::stats::{screen, suggest_variables, ScreeningConfig};
use vulnscape::synth::{census_profiles, generic_catalog, round_robin_labels};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = generic_catalog(10);
    let labels = round_robin_labels(24, 3);
    let profiles = census_profiles(&catalog, &labels, &["v01", "v02"], 2.0, 7);

    let results = screen(&profiles, &labels, &catalog, &ScreeningConfig::default())?;
    for r in &results {
        println!(
            "{:<4} {:?} p={:<10.3e} significant={}",
            r.var_id,
            r.test_used,
            r.p_value.unwrap_or(f64::NAN),
            r.significant
        );
    }
    println!("suggested: {:?}", suggest_variables(&results, 3)?);
    Ok(())
}
