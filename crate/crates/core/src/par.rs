//! Data-parallel helpers. With the `parallel` feature the work runs on rayon;
//! without it every helper degrades to a plain sequential loop.

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Parallel map over `0..n`.
pub fn par_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    par_map(&idx, |&i| f(i))
}

/// Runs `f` with at most `jobs` worker threads; `None` uses the global pool.
pub fn with_jobs<R, F>(jobs: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    if jobs == Some(0) {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    {
        match jobs {
            None => Ok(f()),
            Some(k) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(f())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let out = par_range(100, |i| i * i);
        assert!(out.iter().enumerate().all(|(i, &v)| v == i * i));
    }

    #[test]
    fn pool_sizes() {
        assert_eq!(with_jobs(Some(1), || par_range(10, |i| i).len()).unwrap(), 10);
        assert_eq!(with_jobs(Some(3), || par_range(7, |i| i).iter().sum::<usize>()).unwrap(), 21);
        assert!(with_jobs(Some(0), || ()).is_err());
    }
}
