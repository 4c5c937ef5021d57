//! Central finite-difference oracle for network gradients.
//!
//! Independent of the backward pass: it only calls the inference forward pass
//! on perturbed parameter values.

use nilm_core::nn::{Graph, Mode, Network};
use nilm_core::rng::{stream, Stream};
use nilm_core::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Floor on the relative-error denominator, near the round-off limit of a
/// central difference on an O(1) loss. Below it the error is effectively
/// absolute.
pub const SCALE_FLOOR: f64 = 1e-5;

#[derive(Debug)]
pub struct CheckReport {
    pub checked: usize,
    pub worst_rel: f64,
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn weighted_sum(y: &Tensor, weights: &[f64]) -> f64 {
    y.data().iter().zip(weights).map(|(a, b)| a * b).sum()
}

/// Relative error `|a-n| / max(|a|, |n|, SCALE_FLOOR)` and whether it is
/// below `REL_TOL`.
pub fn compare(analytic: f64, numeric: f64) -> (bool, f64) {
    let scale = analytic.abs().max(numeric.abs()).max(SCALE_FLOOR);
    let rel = (analytic - numeric).abs() / scale;
    (rel < REL_TOL, rel)
}

/// Central difference of `f` at `x0`. A ReLU kink inside the interval makes
/// the estimate depend on the step, so the step shrinks until two successive
/// estimates agree.
pub fn kink_free_difference(f: &mut impl FnMut(f64) -> f64, x0: f64) -> f64 {
    let mut central = |h: f64| (f(x0 + h) - f(x0 - h)) / (2.0 * h);
    let mut h = STEP;
    let mut prev = central(h);
    for _ in 0..3 {
        let next = central(h / 10.0);
        if compare(prev, next).0 {
            return prev;
        }
        h /= 10.0;
        prev = next;
    }
    prev
}

/// Checks `coords` random parameter coordinates of `net` for the loss
/// `Σ wᵢ·yᵢ` with fixed random weights, in inference mode.
pub fn check_params(net: &mut Network, x: &Tensor, coords: usize, seed: u64) -> CheckReport {
    check_params_with(net, x, coords, 0, seed)
}

/// Like [`check_params`], plus `per_tensor` coordinates drawn from every
/// parameter tensor so small tensors are not starved by large ones.
pub fn check_params_with(net: &mut Network, x: &Tensor, coords: usize, per_tensor: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y0 = net.infer(x).unwrap();
    let weights: Vec<f64> = (0..y0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();

    net.params.zero_grad();
    let mut graph = Graph::new();
    let y = net.forward(x, &mut graph, Mode::Infer).unwrap();
    let dy = Tensor::new(y.shape().to_vec(), weights.clone()).unwrap();
    net.backward(&mut graph, &dy).unwrap();

    let sizes: Vec<usize> = net.params.iter().map(|p| p.value.len()).collect();
    let total: usize = sizes.iter().sum();
    let names: Vec<String> = net.params.iter().map(|p| p.name.clone()).collect();
    let mut report = CheckReport {
        checked: 0,
        worst_rel: 0.0,
        failures: Vec::new(),
    };
    let mut picks = Vec::new();
    for _ in 0..coords {
        let mut flat = rng.random_range(0..total);
        let mut slot = 0;
        while flat >= sizes[slot] {
            flat -= sizes[slot];
            slot += 1;
        }
        picks.push((slot, flat));
    }
    for (slot, &n) in sizes.iter().enumerate() {
        for _ in 0..per_tensor {
            picks.push((slot, rng.random_range(0..n)));
        }
    }
    for (slot, flat) in picks {
        let name = &names[slot];
        let analytic = net.params.get(name).unwrap().grad[flat];
        let orig = net.params.get(name).unwrap().value.data()[flat];
        let mut eval = |v: f64| {
            net.params.get_mut(name).unwrap().value.data_mut()[flat] = v;
            weighted_sum(&net.infer(x).unwrap(), &weights)
        };
        let numeric = kink_free_difference(&mut eval, orig);
        net.params.get_mut(name).unwrap().value.data_mut()[flat] = orig;
        let (ok, rel) = compare(analytic, numeric);
        report.checked += 1;
        report.worst_rel = report.worst_rel.max(rel);
        if !ok {
            report
                .failures
                .push(format!("{name}[{flat}]: analytic {analytic:e} numeric {numeric:e}"));
        }
    }
    report
}

/// Checks every input coordinate (up to `coords`) of `net`.
pub fn check_inputs(net: &mut Network, x: &Tensor, coords: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y0 = net.infer(x).unwrap();
    let weights: Vec<f64> = (0..y0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut graph = Graph::with_input_grad();
    net.params.zero_grad();
    let y = net.forward(x, &mut graph, Mode::Infer).unwrap();
    let dy = Tensor::new(y.shape().to_vec(), weights.clone()).unwrap();
    let dx = net.backward_with_input_grad(&mut graph, &dy).unwrap();
    let mut report = CheckReport {
        checked: 0,
        worst_rel: 0.0,
        failures: Vec::new(),
    };
    for _ in 0..coords {
        let i = rng.random_range(0..x.len());
        let mut eval = |v: f64| {
            let mut xv = x.clone();
            xv.data_mut()[i] = v;
            weighted_sum(&net.infer(&xv).unwrap(), &weights)
        };
        let numeric = kink_free_difference(&mut eval, x.data()[i]);
        let (ok, rel) = compare(dx.data()[i], numeric);
        report.checked += 1;
        report.worst_rel = report.worst_rel.max(rel);
        if !ok {
            report
                .failures
                .push(format!("input[{i}]: analytic {:e} numeric {numeric:e}", dx.data()[i]));
        }
    }
    report
}

pub fn random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = stream(seed, Stream::Synthetic);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}
