//! Computation and rigorous two-sided bounding of the weighted Poincaré
//! constant C(p, w) of one-dimensional densities: the smallest C with
//!
//! Var_p(f) ≤ C · E_p[w · f'²]   for all smooth f.
//!
//! The toolkit discretizes the underlying integral operator on a
//! mass-coordinate quadrature grid, iterates it to produce nested two-sided
//! intervals, evaluates the classical variational and kernel-norm bounds,
//! and carries closed-form answers for the built-in density catalog.

// Guards such as `!(v > 0.0)` are written in negated form on purpose: they
// must treat NaN as out of range, which the de-negated comparison would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod density;
pub mod error;
pub mod exact;
pub mod iterate;
pub mod quadrature;
pub mod steinops;

pub use density::{load_tabulated, DensitySpec, WeightSpec};
pub use error::{Error, Result};
pub use quadrature::{build_grid, GridFunction, QuadGrid};

/// Shared rayon pool; `POINCARE_THREADS` caps its size when set.
pub(crate) fn thread_pool() -> &'static rayon::ThreadPool {
    use std::sync::OnceLock;
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Ok(v) = std::env::var("POINCARE_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                if n >= 1 {
                    builder = builder.num_threads(n);
                }
            }
        }
        builder.build().expect("failed to build the worker thread pool")
    })
}
