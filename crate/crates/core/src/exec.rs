//! Data-parallel helpers with a sequential fallback.
//!
//! Work is always split into fixed-size chunks whose boundaries depend only on
//! the problem size, and chunk results are combined in index order. Results are
//! therefore bit-identical between [`Exec::Sequential`] and [`Exec::Parallel`]
//! and across thread counts.

/// How to evaluate independent work items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled; sequential otherwise.
    #[default]
    Parallel,
}

impl Exec {
    /// Map `f` over `0..n` and collect results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Parallel => par_map(n, f),
        }
    }

    /// Fold fixed chunks of `0..n` into accumulators, then merge them in order.
    pub fn fold_chunks<A, I, F, M>(self, n: usize, chunk: usize, init: I, fold: F, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(&mut A, usize) + Sync + Send,
        M: Fn(&mut A, A),
    {
        let chunk = chunk.max(1);
        let n_chunks = n.div_ceil(chunk);
        let parts = self.map(n_chunks, |c| {
            let mut acc = init();
            for i in c * chunk..((c + 1) * chunk).min(n) {
                fold(&mut acc, i);
            }
            acc
        });
        let mut out = init();
        for p in parts {
            merge(&mut out, p);
        }
        out
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Configure the global worker pool. A no-op without the `parallel` feature.
pub fn set_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_bitwise() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let seq = Exec::Sequential.fold_chunks(1001, 7, || 0.0, |a, i| *a += f(i), |a, b| *a += b);
        let par = Exec::Parallel.fold_chunks(1001, 7, || 0.0, |a, i| *a += f(i), |a, b| *a += b);
        assert_eq!(seq.to_bits(), par.to_bits());
        assert_eq!(Exec::Sequential.map(10, |i| i * i), Exec::Parallel.map(10, |i| i * i));
    }
}
