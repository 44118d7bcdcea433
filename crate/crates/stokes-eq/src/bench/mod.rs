//! Benchmark problems, convergence studies and CSV reporting.

pub mod problems;
pub mod study;

pub use problems::{benchmark_by_name, problem_lshape, problem_smooth_square, BenchmarkProblem};
pub use study::{efficiency_index, run_study, StudyArgs, StudyError, CSV_HEADER};

#[cfg(test)]
mod tests;
