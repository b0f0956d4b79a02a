//! Dense linear algebra, reproducible random streams and special functions.
//!
//! Everything here is 64-bit and allocation-light; the matrices involved are
//! at most a few hundred rows (Gram matrices on DCT grids).

mod linalg;
mod rng;
mod special;

pub use linalg::{cholesky, solve_triangular, Cholesky, Matrix, Triangle, GRAM_JITTER, MAX_JITTER};
pub use rng::{mvn_sample, normal_stream, NormalStream, SeedPath};
pub(crate) use linalg::dot;
pub(crate) use rng::mvn_sample_factored;
pub use special::erf;
