//! Exports the pure codes of a briefly trained model and scatters their
//! 2-D projection by class.
//!
//!     cargo run --release --example export_embeddings [out_dir]

use std::path::PathBuf;

use saae::datasets::SynthConfig;
use saae::evaluation::{export_embeddings, pca_2d, read_embeddings};
use saae::plot::{render_scatter, save_png};
use saae::training::{train, TrainConfig};

fn main() -> saae::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("saae-embeddings"));
    std::fs::create_dir_all(&out)?;
    let synth = SynthConfig {
        subjects: 3,
        windows_per_cell: 15,
        ..SynthConfig::default()
    };
    let windows = synth.generate()?;
    let config = TrainConfig {
        batch_size: 32,
        max_epochs: 10,
        ..TrainConfig::default()
    };
    let outcome = train(&windows, synth.classes, &config)?;

    let path = out.join("embeddings.txt");
    export_embeddings(&outcome.model, &windows, &path)?;
    let records = read_embeddings(&std::fs::read_to_string(&path)?)?;
    println!("{} records of dimension {} in {}", records.len(), records[0].gamma.len(), path.display());

    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.gamma.clone()).collect();
    let labels: Vec<u32> = records.iter().map(|r| r.label).collect();
    let png = out.join("embeddings.png");
    save_png(&render_scatter(&pca_2d(&rows)?, &labels)?, &png)?;
    println!("scatter written to {}", png.display());
    Ok(())
}
