//! Order-preserving map over a slice, on a rayon pool when the `parallel`
//! feature is enabled and more than one worker is requested.

#[cfg(feature = "parallel")]
pub struct Pool(Option<rayon::ThreadPool>);

#[cfg(not(feature = "parallel"))]
pub struct Pool;

impl Pool {
    /// `workers <= 1` always runs on the calling thread.
    #[cfg(feature = "parallel")]
    pub fn new(workers: usize) -> Self {
        if workers <= 1 {
            return Pool(None);
        }
        Pool(rayon::ThreadPoolBuilder::new().num_threads(workers).build().ok())
    }

    #[cfg(not(feature = "parallel"))]
    pub fn new(_workers: usize) -> Self {
        Pool
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        return self.0.is_some();
        #[cfg(not(feature = "parallel"))]
        return false;
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.0 {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }
}
