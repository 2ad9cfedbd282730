//! Trains the spectrum guide on its own and reports how well its scores
//! separate information bins from noise bins on unseen spectra.
//!
//!     cargo run --release --example spectrum_guide [steps]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use saae::datasets::synth_spectra;
use saae::nn::{Adam, AdamConfig};
use saae::spectrum::{sample_pairs, set_mean, update_guide, SpectrumGuide, SpectrumRecord};

fn main() -> saae::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let (channels, bins) = (3, 11);
    let train = SpectrumRecord::batch_default(synth_spectra(128, channels, bins, 1))?;
    let held = SpectrumRecord::batch_default(synth_spectra(100, channels, bins, 2))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut guide = SpectrumGuide::new(channels * bins, &mut rng);
    let mut opt = Adam::new(AdamConfig::with_lr(1e-4));
    let all_pairs = train.len() * (train.len() - 1) / 2;
    for step in 1..=steps {
        let loss = update_guide(&mut guide, &mut opt, &train, all_pairs, &mut rng)?;
        if step == 1 || step % 100 == 0 {
            println!("step {step:5}  L_S {loss:.4}");
        }
    }

    let refs: Vec<&SpectrumRecord> = held.iter().collect();
    let fwd = guide.forward(&refs)?;
    let gap = held
        .iter()
        .enumerate()
        .map(|(i, r)| set_mean(fwd.row(i), &r.info_set) - set_mean(fwd.row(i), &r.noise_set))
        .sum::<f64>()
        / held.len() as f64;
    let mean = |i: usize| fwd.row(i).iter().sum::<f64>() / fwd.row(i).len() as f64;
    let pairs = sample_pairs(held.len(), 500, &mut rng);
    let agree = pairs
        .iter()
        .filter(|&&(a, b)| (mean(a) - mean(b)).signum() == (held[a].inter_mean() - held[b].inter_mean()).signum())
        .count();
    println!("held-out info-minus-noise score gap: {gap:.3}");
    println!("louder spectrum scored higher in {agree}/{} pairs", pairs.len());
    Ok(())
}
