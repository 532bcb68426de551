//! Clustering tendency of three reference shapes: uniform noise, two
//! separated blobs and a regular grid.

use vulnscape::synth::{gaussian_blobs, grid, uniform_cube};
use vulnscape::validation::{hopkins_average, HopkinsConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = HopkinsConfig::with_seed(0);
    let (blobs, _) = gaussian_blobs(&[100, 100], 5, 10.0, 1.0, 0);
    let cases = [
        ("uniform 1000x5", uniform_cube(1000, 5, 0)),
        ("two blobs 200x5", blobs),
        ("10x10 grid", grid(10)),
    ];
    println!("{:<16} {:>4} {:>8} {:>10}", "data", "m", "H_av", "p");
    for (name, x) in cases {
        let r = hopkins_average(x.view(), &config)?;
        println!("{name:<16} {:>4} {:>8.4} {:>10.3e}", r.m, r.h_av, r.p_value);
    }
    Ok(())
}
