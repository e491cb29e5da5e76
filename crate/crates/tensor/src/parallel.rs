//! Runtime switch for the rayon code paths.
//!
//! With the `parallel` feature disabled the crate compiles without rayon and
//! every kernel runs sequentially. With the feature enabled (the default),
//! kernels fan out across the batch/row dimension unless disabled at runtime,
//! which the benchmarks use to compare both paths in one process.
//!
//! Parallel and sequential execution produce bit-identical results: work is
//! split over disjoint output regions and reductions stay sequential.

#[cfg(feature = "parallel")]
use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
static ENABLED: AtomicBool = AtomicBool::new(true);

/// True when rayon dispatch is compiled in and currently switched on.
#[inline]
pub fn enabled() -> bool {
    #[cfg(feature = "parallel")]
    {
        ENABLED.load(Ordering::Relaxed)
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

/// Toggle rayon dispatch at runtime. No-op without the `parallel` feature.
pub fn set_enabled(on: bool) {
    #[cfg(feature = "parallel")]
    ENABLED.store(on, Ordering::Relaxed);
    #[cfg(not(feature = "parallel"))]
    let _ = on;
}
