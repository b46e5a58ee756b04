//! Property and gradient-check suites shared by the command line and the
//! acceptance tests.

pub mod bench;
pub mod gradsuite;
pub mod properties;

pub use bench::{attention_bench, bench_tsv, freq_attention, median, pairwise_attention, BenchRow};
pub use gradsuite::{gradcheck_module, GradModule, GradResult};
pub use properties::{circular_conv_brute, conv_theorem_case, properties, run_properties, Property, PropertyOutcome};
