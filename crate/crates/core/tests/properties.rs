mod common;

use proptest::prelude::*;
use rand::SeedableRng;

use saae::datasets::SignalWindow;
use saae::evaluation::{aggregate, metrics, moving_average, MeanStd};
use saae::spectrum::{
    amplitude_spectrum, normalize_inter, normalize_intra, score, select_sets, spectrum_pair_loss, SpectrumGuide,
    SpectrumRecord,
};

fn spectra(rows: usize, m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..50.0, m), rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_values_stay_in_unit_range(batch in (2usize..8, 4usize..30).prop_flat_map(|(r, m)| spectra(r, m))) {
        for rows in [normalize_intra(&batch).unwrap(), normalize_inter(&batch).unwrap()] {
            prop_assert_eq!(rows.len(), batch.len());
            prop_assert!(rows.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn intra_rows_reach_both_ends(row in prop::collection::vec(0.0f64..10.0, 4..40)) {
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(hi - lo > 1e-6);
        let n = &normalize_intra(std::slice::from_ref(&row)).unwrap()[0];
        prop_assert!(n.contains(&0.0) && n.contains(&1.0));
    }

    #[test]
    fn sets_have_declared_sizes_and_are_disjoint(row in prop::collection::vec(0.0f64..1.0, 4..60)) {
        let m = row.len();
        let (u, i) = select_sets(&row).unwrap();
        prop_assert_eq!(u.len(), (0.2 * m as f64).ceil() as usize);
        prop_assert_eq!(i.len(), (0.5 * m as f64).floor() as usize);
        prop_assert!(u.iter().all(|k| !i.contains(k)));
        let u_min = u.iter().map(|&k| row[k]).fold(f64::INFINITY, f64::min);
        let i_max = i.iter().map(|&k| row[k]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(u_min >= i_max);
    }

    #[test]
    fn scores_are_open_unit_interval(batch in spectra(3, 12), seed in 0u64..1000) {
        let records = SpectrumRecord::batch_default(batch).unwrap();
        let guide = SpectrumGuide::new(12, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        for r in &records {
            let (per, mean) = score(&guide, r).unwrap();
            prop_assert!(per.iter().all(|&s| s > 0.0 && s < 1.0));
            prop_assert!(mean > 0.0 && mean < 1.0);
        }
    }

    #[test]
    fn pair_loss_is_bounded_and_symmetric(batch in spectra(2, 10), seed in 0u64..1000) {
        let records = SpectrumRecord::batch_default(batch).unwrap();
        let guide = SpectrumGuide::new(10, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let ab = spectrum_pair_loss(&guide, &records[0], &records[1]).unwrap();
        let ba = spectrum_pair_loss(&guide, &records[1], &records[0]).unwrap();
        // contrast term in (0, 4), residual below 2
        prop_assert!(ab > 0.0 && ab < 6.0);
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn fft_matches_direct_summation(data in prop::collection::vec(-5.0f64..5.0, 2..80)) {
        let len = data.len();
        let w = SignalWindow::new(data.clone(), len, 1, 1, 1).unwrap();
        let got = amplitude_spectrum(&w).unwrap();
        let full = common::dft_magnitudes(&data);
        prop_assert_eq!(got.len(), len / 2 + 1);
        for (k, g) in got.iter().enumerate() {
            prop_assert!((g - full[k]).abs() <= 1e-9 * full[k].max(1.0));
            prop_assert!((full[k] - full[(len - k) % len]).abs() <= 1e-9 * full[k].max(1.0));
        }
    }

    #[test]
    fn metrics_ignore_sample_order(pairs in prop::collection::vec((1u32..=4, 1u32..=4), 1..60), seed in 0u64..100) {
        let (preds, labels): (Vec<u32>, Vec<u32>) = pairs.iter().copied().unzip();
        let base = metrics(&preds, &labels, 4).unwrap();
        let mut shuffled = pairs.clone();
        rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (p2, l2): (Vec<u32>, Vec<u32>) = shuffled.into_iter().unzip();
        let other = metrics(&p2, &l2, 4).unwrap();
        prop_assert!((base.accuracy - other.accuracy).abs() < 1e-12);
        prop_assert!((base.precision - other.precision).abs() < 1e-12);
        prop_assert!((base.f1 - other.f1).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_class_names(pairs in prop::collection::vec((1u32..=4, 1u32..=4), 1..60)) {
        let relabel = |c: u32| [3, 1, 4, 2][c as usize - 1];
        let (preds, labels): (Vec<u32>, Vec<u32>) = pairs.iter().copied().unzip();
        let a = metrics(&preds, &labels, 4).unwrap();
        let p2: Vec<u32> = preds.iter().map(|&c| relabel(c)).collect();
        let l2: Vec<u32> = labels.iter().map(|&c| relabel(c)).collect();
        let b = metrics(&p2, &l2, 4).unwrap();
        prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12);
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        prop_assert!((a.precision - b.precision).abs() < 1e-12);
        prop_assert!(a.f1 >= 0.0 && a.f1 <= 1.0 && a.precision >= 0.0 && a.precision <= 1.0);
    }

    #[test]
    fn aggregate_ignores_fold_order(accs in prop::collection::vec(0.0f64..1.0, 1..10)) {
        let reports: Vec<_> = accs
            .iter()
            .map(|&a| {
                let n = 20;
                let hits = (a * n as f64).round() as usize;
                let labels = vec![1u32; n];
                let preds: Vec<u32> = (0..n).map(|i| if i < hits { 1 } else { 2 }).collect();
                metrics(&preds, &labels, 2).unwrap()
            })
            .collect();
        let mut reversed = reports.clone();
        reversed.reverse();
        let (x, y) = (aggregate(&reports).unwrap(), aggregate(&reversed).unwrap());
        prop_assert!((x.accuracy.mean - y.accuracy.mean).abs() < 1e-12);
        prop_assert!((x.accuracy.std - y.accuracy.std).abs() < 1e-12);
        let direct = MeanStd::of(&reports.iter().map(|m| m.accuracy).collect::<Vec<_>>()).unwrap();
        prop_assert!((x.accuracy.mean - direct.mean).abs() < 1e-12);
    }

    #[test]
    fn moving_average_of_constant_is_constant(v in -10.0f64..10.0, n in 1usize..50, w in 1usize..20) {
        let out = moving_average(&vec![v; n], w).unwrap();
        prop_assert!(out.iter().all(|x| (x - v).abs() < 1e-12));
    }
}

#[test]
fn window_one_smoothing_is_identity() {
    let xs = [3.0, 1.0, 4.0, 1.0, 5.0];
    assert_eq!(moving_average(&xs, 1).unwrap(), xs);
    assert!(moving_average(&xs, 0).is_err());
}
