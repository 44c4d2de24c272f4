//! Seed-level fan-out. With the `parallel` feature seeds run on a rayon pool
//! capped by `CMAB_THREADS`; without it they run one after another. Results
//! always come back in input order.

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "CMAB_THREADS";

/// Thread cap from `CMAB_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}

pub fn map_seeds_sequential<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    seeds.iter().map(|s| f(*s)).collect()
}

#[cfg(feature = "parallel")]
pub fn map_seeds_parallel<T, F>(seeds: &[u64], threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let run = || seeds.par_iter().map(|s| f(*s)).collect();
    match threads {
        Some(1) => map_seeds_sequential(seeds, f),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}

pub fn map_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_seeds_parallel(seeds, thread_cap(), f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_seeds_sequential(seeds, f)
    }
}
