//! Pressure-robust Stokes discretizations with guaranteed a posteriori
//! error control.

pub mod mesh;
pub mod poly;
pub mod quadrature;
pub mod space;
pub mod assemble;
pub mod amr;
pub mod bench;
pub mod ceq;
pub mod coeffio;
pub mod estimator;
pub mod geq;
pub mod leq;
pub mod project;
pub mod stokes;
pub mod system;
