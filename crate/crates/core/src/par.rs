//! Sequential or rayon-backed maps, selected by the `parallel` feature.
//! Results are in input order either way.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
pub(crate) fn map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn map_mut<T: Send, U: Send>(items: &mut [T], f: impl Fn(usize, &mut T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_mut<T, U>(items: &mut [T], f: impl Fn(usize, &mut T) -> U) -> Vec<U> {
    items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
}
