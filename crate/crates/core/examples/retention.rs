//! Bottom-up retention: filter registrations, build client journeys and
//! print the exit-age distribution.

use vulnscape::pipeline::{run_bottomup, BottomUpConfig};
use vulnscape::retention::{Facet, GroupingRules};
use vulnscape::synth::RegistrationFixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records = RegistrationFixture::default().generate(0);
    let run = run_bottomup(&records, &BottomUpConfig::default(), &GroupingRules::default(), None)?;
    println!(
        "{} registrations, {} kept, {} rejected, {} journeys",
        records.len(),
        run.filtered.kept.len(),
        run.filtered.rejected.len(),
        run.journeys.len()
    );
    let exit_age = run.tables.iter().find(|t| t.facet == Facet::ExitAge).expect("exit_age table");
    for row in &exit_age.rows {
        println!("{:?} {:>4} {:.3}", row.key, row.count, row.proportion);
    }
    if let Some(m) = exit_age.mode() {
        println!("modal exit age {:?}", m.key);
    }
    Ok(())
}
