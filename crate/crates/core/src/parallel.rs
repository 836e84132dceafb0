//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the indexed map runs on the rayon pool;
//! without it (or with [`Execution::Sequential`]) it runs in order. Both
//! paths return results in index order.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    /// Whether the parallel path is compiled in.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}
