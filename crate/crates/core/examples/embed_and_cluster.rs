//! Projects one EDI wave with t-SNE, clusters the layout and prints the
//! cluster of every neighborhood.
//!
//!     cargo run --example embed_and_cluster -- 42

use vulnscape::clustering::{cluster_embedding, default_k, write_solution_csv};
use vulnscape::domain::Wave;
use vulnscape::embedding::{embed, EmbeddingConfig, Method, WaveMode};
use vulnscape::synth::EdiFixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(42);
    let fixture = EdiFixture::default().generate(seed);
    let mode = WaveMode::SingleWave(Wave::new(6)?);

    let config = EmbeddingConfig::new(Method::Tsne, seed);
    let emb = embed(&fixture.dataset, mode, &config)?;
    let (_, kl) = emb.objective_trace.last().copied().unwrap_or_default();
    eprintln!("t-SNE final KL {kl:.4}");

    let sol = cluster_embedding(&emb, default_k(mode, Method::Tsne), seed, 50)?;
    eprintln!("wcss {:.3}", sol.wcss);
    write_solution_csv(&emb, &sol, std::io::stdout())?;
    Ok(())
}
