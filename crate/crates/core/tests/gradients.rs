mod common;

use common::*;
use rand::SeedableRng;
use saae::nn::Module;

fn assert_clean(name: &str, r: &GradReport) {
    assert!(r.ok(), "{name}: {} of {} coordinates off\n{}", r.failures.len(), r.checked, r.failures.join("\n"));
}

#[test]
fn all_losses_match_central_differences() {
    for seed in [1, 2] {
        for (name, report) in gradient_suite(seed, 3, 50) {
            assert!(report.checked >= 50);
            assert_clean(name, &report);
        }
    }
}

#[test]
fn non_saturating_disparity_gradient() {
    let Toy {
        mut model,
        x,
        labels,
        class_weights,
        ..
    } = toy(4);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let coords = pick_coords(&mut model, dis_params, 3, 50, &mut rng);
    let r = grad_check(&mut model, dis_params, l_dis(&x, &labels, &class_weights, true), &coords);
    assert_clean("L_dis non-saturating", &r);
}

#[test]
fn every_tensor_receives_gradient() {
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
    } = toy(6);
    assert_eq!(dead_tensors(&mut guide, guide_params, l_s(&records, &pairs)), Vec::<usize>::new());
    assert_eq!(dead_tensors(&mut model, rec_params, l_rec(&x, &weights)), Vec::<usize>::new());
    assert_eq!(dead_tensors(&mut model, pur_params, l_pur(&x, &labels, &cw)), Vec::<usize>::new());
    assert_eq!(dead_tensors(&mut model, dis_params, l_dis(&x, &labels, &cw, false)), Vec::<usize>::new());
}

#[test]
fn objectives_touch_only_their_own_networks() {
    let Toy {
        mut model,
        x,
        labels,
        weights,
        class_weights: cw,
        ..
    } = toy(8);
    let grads_of = |params: Vec<&mut saae::nn::Param>| params.iter().any(|p| p.grad.iter().any(|&g| g != 0.0));

    l_rec(&x, &weights)(&mut model);
    assert!(!grads_of(model.eta.params_mut()) && !grads_of(model.disc.params_mut()));

    l_pur(&x, &labels, &cw)(&mut model);
    assert!(!grads_of(model.eta.params_mut()) && !grads_of(model.theta.params_mut()));

    l_dis(&x, &labels, &cw, false)(&mut model);
    assert!(!grads_of(model.phi.params_mut()) && !grads_of(model.theta.params_mut()));
}
