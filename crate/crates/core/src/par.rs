//! Data-parallel helpers with a sequential fallback.
//!
//! Every parallel map returns its results in input order, and all reductions
//! downstream are done sequentially over that ordered output, so the numerics
//! are bit-identical between [`ExecMode::Parallel`] and
//! [`ExecMode::Sequential`]. Without the `parallel` feature both modes run
//! sequentially.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

impl ExecMode {
    /// True when this mode actually fans out to the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Ordered map over a slice.
pub fn map_slice<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Ordered map over `0..n`.
pub fn map_range<R, F>(mode: ExecMode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.37).collect();
        let a = map_slice(ExecMode::Parallel, &xs, |x| x.sin());
        let b = map_slice(ExecMode::Sequential, &xs, |x| x.sin());
        assert_eq!(a, b);
        let c = map_range(ExecMode::Parallel, 17, |i| i * i);
        assert_eq!(c, (0..17).map(|i| i * i).collect::<Vec<_>>());
    }
}
