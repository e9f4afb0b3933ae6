//! Execution strategy for the data-parallel loops (per-server answers,
//! privacy enumeration, sweeps).
//!
//! With the `parallel` feature disabled, [`Exec::Parallel`] silently runs
//! sequentially, so callers never need their own `cfg` switches.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Folds `0..n` into per-worker accumulators, then merges them.
    pub fn fold_range<A, Id, F, Mg>(self, n: usize, identity: Id, fold: F, merge: Mg) -> A
    where
        A: Send,
        Id: Fn() -> A + Sync + Send,
        F: Fn(A, usize) -> A + Sync + Send,
        Mg: Fn(A, A) -> A + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().fold(&identity, &fold).reduce(&identity, &merge),
            _ => {
                let _ = merge;
                (0..n).fold(identity(), fold)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_strategies_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = Exec::Sequential.map(&items, |x| x * x);
        let par = Exec::Parallel.map(&items, |x| x * x);
        assert_eq!(seq, par);
        let s1 = Exec::Sequential.fold_range(500, || 0u64, |a, i| a + i as u64, |a, b| a + b);
        let s2 = Exec::Parallel.fold_range(500, || 0u64, |a, i| a + i as u64, |a, b| a + b);
        assert_eq!(s1, s2);
        assert_eq!(Exec::Parallel.map_range(10, |i| i * 2), (0..10).map(|i| i * 2).collect::<Vec<_>>());
    }
}
