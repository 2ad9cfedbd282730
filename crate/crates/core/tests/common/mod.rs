//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use saae::nn::Param;

/// Magnitudes of the full discrete Fourier transform by direct summation.
pub fn dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += v * angle.cos();
                im += v * angle.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Accessor for the parameter group a check perturbs.
pub type Params<S> = for<'a> fn(&'a mut S) -> Vec<&'a mut Param>;

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl GradReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Denominator floor: below this both gradients count as zero.
pub const FD_FLOOR: f64 = 1e-6;

/// `(tensor, index)` pairs: `per_tensor` from every tensor, then random
/// extra coordinates until `total` is reached.
pub fn pick_coords<S, R: Rng>(state: &mut S, params: Params<S>, per_tensor: usize, total: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let sizes: Vec<usize> = params(state).iter().map(|p| p.len()).collect();
    let mut out = Vec::new();
    for (t, &n) in sizes.iter().enumerate() {
        for _ in 0..per_tensor.min(n) {
            out.push((t, rng.random_range(0..n)));
        }
    }
    let all: usize = sizes.iter().sum();
    while out.len() < total {
        let mut k = rng.random_range(0..all);
        let mut t = 0;
        while k >= sizes[t] {
            k -= sizes[t];
            t += 1;
        }
        out.push((t, k));
    }
    out
}

/// Compares analytic gradients against central differences.
/// `objective` must clear gradients, evaluate the loss and accumulate its
/// gradient into the parameters.
pub fn grad_check<S>(
    state: &mut S,
    params: Params<S>,
    mut objective: impl FnMut(&mut S) -> f64,
    coords: &[(usize, usize)],
) -> GradReport {
    objective(state);
    let analytic: Vec<Vec<f64>> = params(state).iter().map(|p| p.grad.clone()).collect();
    let mut report = GradReport::default();
    for &(t, i) in coords {
        let original = params(state)[t].value[i];
        params(state)[t].value[i] = original + FD_STEP;
        let up = objective(state);
        params(state)[t].value[i] = original - FD_STEP;
        let down = objective(state);
        params(state)[t].value[i] = original;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[t][i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
        report.checked += 1;
        report.worst = report.worst.max(rel);
        if rel > FD_TOL {
            report
                .failures
                .push(format!("tensor {t} index {i}: analytic {a:e} numeric {numeric:e} rel {rel:e}"));
        }
    }
    report
}

/// Tensors whose analytic gradient is identically zero.
pub fn dead_tensors<S>(state: &mut S, params: Params<S>, mut objective: impl FnMut(&mut S) -> f64) -> Vec<usize> {
    objective(state);
    params(state)
        .iter()
        .enumerate()
        .filter(|(_, p)| p.grad.iter().all(|&g| g == 0.0))
        .map(|(i, _)| i)
        .collect()
}

use std::collections::BTreeMap;

use saae::datasets::{synth_generate, SignalWindow};
use saae::network::{Architecture, ModelMeta, SaaeModel};
use saae::training::{disparity_objective, purification_objective, reconstruction_objective, DisparityPass};
use saae::nn::{FeatureMap, Module};
use saae::spectrum::{amplitude_spectrum, SpectrumGuide, SpectrumRecord};

/// A toy model (T=8, Ch=2, C=2) with a fixed minibatch and weights.
pub struct Toy {
    pub model: SaaeModel,
    pub guide: SpectrumGuide,
    pub windows: Vec<SignalWindow>,
    pub x: FeatureMap,
    pub labels: Vec<u32>,
    pub weights: Vec<f64>,
    pub class_weights: BTreeMap<u32, f64>,
    pub records: Vec<SpectrumRecord>,
    pub pairs: Vec<(usize, usize)>,
}

pub fn toy(seed: u64) -> Toy {
    let meta = ModelMeta::new(8, 2, 2, Architecture::toy()).unwrap();
    let model = SaaeModel::build(meta, seed).unwrap();
    let windows: Vec<SignalWindow> = synth_generate(2, 2, 8, 2, 2, seed).unwrap();
    let refs: Vec<&SignalWindow> = windows.iter().collect();
    let x = model.input_map(&refs).unwrap();
    let labels = windows.iter().map(|w| w.label).collect();
    let weights = (0..windows.len()).map(|i| 0.3 + 0.1 * i as f64).collect();
    let class_weights = BTreeMap::from([(1, 0.7), (2, 0.45)]);
    let amps = windows.iter().map(|w| amplitude_spectrum(w).unwrap()).collect();
    let records = SpectrumRecord::batch_default(amps).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let guide = SpectrumGuide::new(records[0].len(), &mut rng);
    let pairs = vec![(0, 1), (0, 5), (2, 3), (1, 6), (4, 7), (3, 5)];
    Toy {
        model,
        guide,
        windows,
        x,
        labels,
        weights,
        class_weights,
        records,
        pairs,
    }
}

pub fn rec_params(m: &mut SaaeModel) -> Vec<&mut Param> {
    let mut v = m.phi.params_mut();
    v.extend(m.theta.params_mut());
    v
}

pub fn pur_params(m: &mut SaaeModel) -> Vec<&mut Param> {
    let mut v = m.phi.params_mut();
    v.extend(m.disc.params_mut());
    v
}

pub fn dis_params(m: &mut SaaeModel) -> Vec<&mut Param> {
    m.eta.params_mut()
}

pub fn guide_params(g: &mut SpectrumGuide) -> Vec<&mut Param> {
    g.params_mut()
}

pub fn l_rec<'a>(x: &'a FeatureMap, weights: &'a [f64]) -> impl FnMut(&mut SaaeModel) -> f64 + 'a {
    move |m| {
        m.zero_grad();
        let eta = DisparityPass::new(m, x);
        reconstruction_objective(m, x, &eta, weights, false).unwrap()
    }
}

pub fn l_pur<'a>(x: &'a FeatureMap, labels: &'a [u32], cw: &'a BTreeMap<u32, f64>) -> impl FnMut(&mut SaaeModel) -> f64 + 'a {
    move |m| {
        m.zero_grad();
        let eta = DisparityPass::new(m, x);
        purification_objective(m, x, &eta, labels, cw, 1.0).unwrap().0
    }
}

pub fn l_dis<'a>(
    x: &'a FeatureMap,
    labels: &'a [u32],
    cw: &'a BTreeMap<u32, f64>,
    non_saturating: bool,
) -> impl FnMut(&mut SaaeModel) -> f64 + 'a {
    move |m| {
        m.zero_grad();
        let eta = DisparityPass::new(m, x);
        disparity_objective(m, &eta, labels, cw, non_saturating, 1.0).unwrap()
    }
}

pub fn l_s<'a>(records: &'a [SpectrumRecord], pairs: &'a [(usize, usize)]) -> impl FnMut(&mut SpectrumGuide) -> f64 + 'a {
    move |g| {
        g.zero_grad();
        g.pair_objective(records, pairs).unwrap()
    }
}

/// Finite-difference check of all four losses on the toy model:
/// `per_tensor` coordinates from every tensor, at least `total` per loss.
pub fn gradient_suite(seed: u64, per_tensor: usize, total: usize) -> Vec<(&'static str, GradReport)> {
    let Toy {
        mut model,
        mut guide,
        x,
        labels,
        weights,
        class_weights: cw,
        records,
        pairs,
        ..
    } = toy(seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = Vec::new();
    let coords = pick_coords(&mut guide, guide_params, per_tensor, total, &mut rng);
    out.push(("L_S", grad_check(&mut guide, guide_params, l_s(&records, &pairs), &coords)));
    let coords = pick_coords(&mut model, rec_params, per_tensor, total, &mut rng);
    out.push(("L_rec", grad_check(&mut model, rec_params, l_rec(&x, &weights), &coords)));
    let coords = pick_coords(&mut model, pur_params, per_tensor, total, &mut rng);
    out.push(("L_pur", grad_check(&mut model, pur_params, l_pur(&x, &labels, &cw), &coords)));
    let coords = pick_coords(&mut model, dis_params, per_tensor, total, &mut rng);
    out.push(("L_dis", grad_check(&mut model, dis_params, l_dis(&x, &labels, &cw, false), &coords)));
    out
}
