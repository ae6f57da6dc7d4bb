//! Certified upper bounds on the minimum Bhattacharyya distance of codes
//! over discrete memoryless channels.
//!
//! The pipeline: a [`channel::Channel`] yields a Bhattacharyya Gram matrix,
//! [`theta::optimize_theta`] and friends search for low-value orthonormal
//! representations of a given degree, and `bound` assembles the resulting
//! theta values into rate-dependent distance bounds. Every optimizer output
//! is a [`theta::ThetaCertificate`] that can be re-audited from scratch, so
//! a consumer never has to trust the search.
//!
//! With the default `parallel` feature, independent subproblems (restarts,
//! per-input rows, enumeration shards) run on rayon; disabling it yields a
//! dependency-light sequential build with bit-identical results.

pub mod binary;
pub mod bound;
pub mod channel;
mod error;
pub mod oracle;
mod par;
pub mod theta;
pub mod tol;

pub use error::{Error, Result};

/// Caps the worker pool at `threads`. Must be called before the first
/// parallel region; later calls fail. Without the `parallel` feature this
/// is a no-op, since all work is sequential anyway.
///
/// Thread count never affects results, only wall time: every parallel loop
/// collects in input order.
pub fn configure_thread_pool(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::InvalidInput("thread count must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}
