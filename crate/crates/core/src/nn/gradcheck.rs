//! Central-difference verification of analytic gradients.
//!
//! The loss is recomputed at `v + h` and `v - h` for sampled parameter
//! coordinates and compared against the tape's gradient. All arithmetic is
//! f64; with h = 1e-5 the truncation plus rounding noise sits far below the
//! acceptance threshold for any smoothly differentiable graph.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::store::{ParamId, ParameterStore};

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Default relative-error threshold for a passing check.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Relative error with an absolute floor: |a - n| / max(|a|, |n|, 1e-4).
/// The floor stops near-zero gradients from amplifying difference noise.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Numeric d(loss)/d(param[coord]) via central differences. The parameter is
/// restored bit-exactly afterwards.
pub fn central_difference<F>(
    store: &mut ParameterStore,
    id: ParamId,
    coord: (usize, usize),
    h: f64,
    mut loss_fn: F,
) -> f64
where
    F: FnMut(&ParameterStore) -> f64,
{
    let original = store.value(id)[[coord.0, coord.1]];
    store.value_mut(id)[[coord.0, coord.1]] = original + h;
    let plus = loss_fn(store);
    store.value_mut(id)[[coord.0, coord.1]] = original - h;
    let minus = loss_fn(store);
    store.value_mut(id)[[coord.0, coord.1]] = original;
    (plus - minus) / (2.0 * h)
}

/// Worst observed coordinate of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_coord: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Checks the stored analytic gradients of `ids` against central differences
/// of `loss_fn`, sampling up to `samples_per_tensor` coordinates per tensor
/// (all of them for small tensors). The store's gradients must already hold
/// exactly the gradient of the same loss.
pub fn check_sampled<F>(
    store: &mut ParameterStore,
    ids: &[ParamId],
    samples_per_tensor: usize,
    h: f64,
    seed: u64,
    mut loss_fn: F,
) -> GradCheckReport
where
    F: FnMut(&ParameterStore) -> f64,
{
    assert!(samples_per_tensor > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let analytic: Vec<ndarray::Array2<f64>> =
        ids.iter().map(|&id| store.grad(id).clone()).collect();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_coord: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for (slot, &id) in ids.iter().enumerate() {
        let dim = store.value(id).raw_dim();
        let mut coords: Vec<(usize, usize)> = (0..dim[0])
            .flat_map(|r| (0..dim[1]).map(move |c| (r, c)))
            .collect();
        if coords.len() > samples_per_tensor {
            coords.shuffle(&mut rng);
            coords.truncate(samples_per_tensor);
        }
        for coord in coords {
            let numeric = central_difference(store, id, coord, h, &mut loss_fn);
            let a = analytic[slot][[coord.0, coord.1]];
            let err = rel_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = store.name(id).to_string();
                report.worst_coord = coord;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report
}
