//! Central-difference gradient verification.
//!
//! Used by the test suites to compare analytic gradients against a numeric
//! oracle at `f64` precision. Lives in the library (not test code) so
//! downstream crates can reuse it on their own network blocks.

use ndarray::ArrayD;

use crate::Scalar;

/// Maximum relative error between analytic gradients and central differences.
///
/// `f` evaluates the scalar objective at the given parameter values.
/// `analytic` are the gradients to verify, one per parameter, matching shapes.
/// Relative error is `|a - n| / max(1, |a|, |n|)` per element, maximized.
pub fn max_rel_error<T: Scalar>(
    mut f: impl FnMut(&[ArrayD<T>]) -> T,
    params: &[ArrayD<T>],
    analytic: &[ArrayD<T>],
    eps: T,
) -> T {
    assert_eq!(params.len(), analytic.len());
    let mut worst = T::zero();
    let mut work: Vec<ArrayD<T>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        assert_eq!(p.shape(), analytic[pi].shape(), "gradient shape mismatch");
        for idx in 0..p.len() {
            let orig = p.as_slice().unwrap()[idx];
            work[pi].as_slice_mut().unwrap()[idx] = orig + eps;
            let up = f(&work);
            work[pi].as_slice_mut().unwrap()[idx] = orig - eps;
            let down = f(&work);
            work[pi].as_slice_mut().unwrap()[idx] = orig;
            let numeric = (up - down) / (T::of(2.0) * eps);
            let a = analytic[pi].as_slice().unwrap()[idx];
            let denom = T::one().max(a.abs()).max(numeric.abs());
            let rel = (a - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}
