//! Order-preserving map over independent jobs.
//!
//! With the `parallel` feature the jobs run on a rayon pool; otherwise they
//! run one after another. Output order always matches input order, so
//! results are identical either way.

/// Apply `f` to every item sequentially.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Apply `f` to every item using up to `jobs` threads (`0` means the rayon
/// default). Falls back to [`map_sequential`] without the `parallel`
/// feature or when `jobs == 1`.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if jobs == 1 || items.len() <= 1 {
        return map_sequential(items, f);
    }
    let run = || items.par_iter().map(&f).collect();
    if jobs == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(run),
        Err(_) => map_sequential(items, f),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], _jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_sequential(items, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map_sequential(&items, |x| x * x);
        for jobs in [0, 1, 3] {
            assert_eq!(map(&items, jobs, |x| x * x), seq);
        }
    }
}
