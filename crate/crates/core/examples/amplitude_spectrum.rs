//! Amplitude spectrum of a two-channel window and the bins the guide
//! treats as information and as noise.
//!
//!     cargo run --example amplitude_spectrum

use std::f64::consts::TAU;

use saae::datasets::SignalWindow;
use saae::spectrum::{amplitude_spectrum, bins_per_channel, SpectrumRecord};

fn main() -> saae::Result<()> {
    let len = 20;
    // channel 0: strong tone at bin 3, channel 1: weak tone at bin 7 plus a DC offset
    let mut data = Vec::with_capacity(len * 2);
    for t in 0..len {
        let tt = t as f64 / len as f64;
        data.push(2.0 * (TAU * 3.0 * tt).sin());
        data.push(0.5 + 0.4 * (TAU * 7.0 * tt + 1.0).cos());
    }
    let window = SignalWindow::new(data, len, 2, 1, 1)?;
    let amps = amplitude_spectrum(&window)?;
    let bins = bins_per_channel(len);

    for c in 0..2 {
        let row: Vec<String> = amps[c * bins..(c + 1) * bins].iter().map(|a| format!("{a:5.2}")).collect();
        println!("channel {c}: {}", row.join(" "));
    }

    // a second, quieter window so inter-spectrum normalization has something to compare
    let quiet: Vec<f64> = amps.iter().map(|a| 0.3 * a).collect();
    let records = SpectrumRecord::batch_default(vec![amps, quiet])?;
    let r = &records[0];
    // 22 bins give 5 info slots; only 3 bins carry energy, so silent bins fill the rest
    println!("info bins  (top 20%): {:?}", r.info_set);
    println!("noise bins (low 50%): {:?}", r.noise_set);
    println!("mean inter-normalized amplitude: loud {:.3}, quiet {:.3}", r.inter_mean(), records[1].inter_mean());
    Ok(())
}
