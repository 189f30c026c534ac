//! Benchmark objectives with analytic derivatives up to third order.

mod hard_family;
mod libsvm;
mod logistic;
mod simple;

pub use hard_family::{hard_family_lipschitz, HardFamily};
pub use libsvm::{format_libsvm, load_libsvm, parse_libsvm, write_libsvm, Dataset, LabelMapping};
pub use logistic::{logreg_lipschitz, synth_logreg, synth_logreg_with_truth, LogisticRegression};
pub use simple::{Quadratic, SeparableQuartic};

/// Lowercase hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
