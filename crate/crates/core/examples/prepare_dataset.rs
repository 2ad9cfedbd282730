//! Parses a raw dataset into windows and writes the binary cache.
//!
//!     cargo run --example prepare_dataset -- mhealth /data/MHEALTHDATASET out.cache
//!
//! Without arguments it writes a tiny MHEALTH-shaped tree to a temporary
//! directory and prepares that instead.

use std::fs;
use std::path::PathBuf;

use saae::datasets::{load_windows, DatasetSpec, WindowCache, DEFAULT_OVERLAP, DEFAULT_WINDOW_LEN};

fn fake_mhealth(root: &std::path::Path) -> std::io::Result<()> {
    fs::create_dir_all(root)?;
    for s in 1..=10u32 {
        let mut text = String::new();
        for label in 0..=12u32 {
            for r in 0..30u32 {
                let row: Vec<String> = (0..23u32)
                    .map(|c| format!("{:.3}", ((s + label * 3 + r + c) as f64 * 0.37).sin()))
                    .collect();
                text += &format!("{}\t{label}\n", row.join("\t"));
            }
        }
        fs::write(root.join(format!("mHealth_subject{s}.log")), text)?;
    }
    Ok(())
}

fn main() -> saae::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scratch = std::env::temp_dir().join("saae-prepare-example");
    let (name, root, out) = match args.as_slice() {
        [name, root, out] => (name.clone(), PathBuf::from(root), PathBuf::from(out)),
        _ => {
            fake_mhealth(&scratch.join("raw"))?;
            ("mhealth".to_string(), scratch.join("raw"), scratch.join("mhealth.cache"))
        }
    };

    let spec = DatasetSpec::builtin(&name)?;
    let windows = load_windows(&name, &root, Some(&spec), DEFAULT_WINDOW_LEN, DEFAULT_OVERLAP)?;
    let cache = WindowCache::new(spec.name.clone(), spec.classes, windows)?;
    cache.save(&out)?;

    println!("{} windows of {} x {} written to {}", cache.windows.len(), cache.window_len, cache.channels, out.display());
    for (subject, per_class) in cache.counts() {
        println!("  subject {subject}: {} classes, {} windows", per_class.len(), per_class.values().sum::<usize>());
    }
    let again = WindowCache::load(&out)?;
    println!("digest {} (reload {})", cache.digest(), again.digest());
    Ok(())
}
