//! Index-ordered fan-out over independent work items.
//!
//! With the `parallel` feature the items run on a rayon pool sized by
//! [`Workers`]; without it everything runs on the calling thread. Results are
//! always returned in index order, so the worker count never changes output.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workers {
    /// One worker per available core.
    #[default]
    Auto,
    Fixed(usize),
}

impl Workers {
    pub fn from_count(count: Option<usize>) -> Self {
        match count {
            None | Some(0) => Workers::Auto,
            Some(n) => Workers::Fixed(n),
        }
    }

    pub fn is_sequential(self) -> bool {
        matches!(self, Workers::Fixed(1)) || !cfg!(feature = "parallel")
    }
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers.is_sequential() || n <= 1 {
        return (0..n).map(f).collect();
    }
    parallel_map(n, workers, f)
}

/// Like [`map_indexed`] for fallible work; the error of the lowest failing index wins.
pub fn try_map_indexed<T, E, F>(n: usize, workers: Workers, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, workers, f).into_iter().collect()
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;

    let run = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
    match workers {
        Workers::Auto => run(),
        Workers::Fixed(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("could not build a {k}-thread pool ({e}); using the global pool");
                run()
            }
        },
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, _workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let seq = map_indexed(100, Workers::Fixed(1), |i| i * i);
        let par = map_indexed(100, Workers::Fixed(8), |i| i * i);
        assert_eq!(seq, par);
    }

    #[test]
    fn first_error_by_index() {
        let r: Result<Vec<usize>, usize> =
            try_map_indexed(50, Workers::Fixed(4), |i| if i % 7 == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }
}
