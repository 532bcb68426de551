//! Assigns synthetic dissemination areas to neighborhoods by centroid and
//! rolls their census rows up.

use vulnscape::geo::{aggregate, assign_da, covered, DEFAULT_WEIGHT_VAR};
use vulnscape::domain::default_catalog;
use vulnscape::synth::synthetic_map;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = synthetic_map(200, 0);
    let assignments = assign_da(&map.das, &map.neighborhoods)?;
    let unassigned = assignments.values().filter(|a| a.is_none()).count();
    println!(
        "{} DAs: {} assigned, {unassigned} outside every neighborhood; {} neighborhoods covered",
        assignments.len(),
        assignments.len() - unassigned,
        covered(&assignments).len()
    );

    let catalog: Vec<_> = default_catalog()
        .into_iter()
        .filter(|v| map.table.var_ids.contains(&v.var_id))
        .collect();
    let agg = aggregate(&assignments, &map.table, &catalog, DEFAULT_WEIGHT_VAR)?;
    for p in agg.profiles.iter().take(5) {
        println!("{} {:?}", p.neighborhood, p.values);
    }
    Ok(())
}
