//! Execution policy for the data-parallel loops in the pipeline.
//!
//! Every parallel loop in the crate goes through these helpers so that the
//! sequential and the rayon code paths produce identical results: work items
//! are indexed, each item is computed independently, and outputs are
//! collected in index order.

/// How data-parallel loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Plain iterator on the calling thread.
    Sequential,
    /// Rayon work-stealing pool. Falls back to [`Execution::Sequential`]
    /// when the crate is built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this policy actually runs on the rayon pool in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps `f` over a slice, returning results in slice order.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let seq = map_range(Execution::Sequential, 1000, |i| (i * i) % 97);
        let par = map_range(Execution::Parallel, 1000, |i| (i * i) % 97);
        assert_eq!(seq, par);
        let v: Vec<u32> = (0..257).collect();
        assert_eq!(
            map_slice(Execution::Sequential, &v, |x| x + 1),
            map_slice(Execution::Parallel, &v, |x| x + 1)
        );
    }
}
