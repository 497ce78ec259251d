use rand::seq::index::sample;

use super::params::init_rng;
use super::ParamStore;
use crate::error::Result;

/// Smallest magnitude used as the denominator of a relative error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Which scalar coordinates a gradient check perturbs.
#[derive(Debug, Clone, Copy)]
pub enum CoordSample {
    All,
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the coordinate with the largest error.
    pub worst_coordinate: Option<usize>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares analytic gradients against central differences.
///
/// `loss_and_grad` returns the loss and the flat gradient (store order) for a
/// given set of parameters. Errors are `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn finite_diff_check<F>(store: &ParamStore, eps: f64, coords: CoordSample, mut loss_and_grad: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(f64, Vec<f64>)>,
{
    let (_, analytic) = loss_and_grad(store)?;
    let total = store.scalar_count();
    let indices: Vec<usize> = match coords {
        CoordSample::All => (0..total).collect(),
        CoordSample::Random { count, seed } => {
            let mut idx = sample(&mut init_rng(seed), total, count.min(total)).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    let mut work = store.clone();
    let mut report = GradCheckReport { max_relative_error: 0.0, worst_coordinate: None, checked: 0 };
    for &flat in &indices {
        let (id, elem) = store.locate(flat).expect("index within store");
        let original = store.value(id).data()[elem];
        work.value_mut(id).data_mut()[elem] = original + eps;
        let (plus, _) = loss_and_grad(&work)?;
        work.value_mut(id).data_mut()[elem] = original - eps;
        let (minus, _) = loss_and_grad(&work)?;
        work.value_mut(id).data_mut()[elem] = original;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic[flat], numeric);
        if err > report.max_relative_error || report.worst_coordinate.is_none() {
            report.max_relative_error = err;
            report.worst_coordinate = Some(flat);
        }
        report.checked += 1;
    }
    Ok(report)
}
