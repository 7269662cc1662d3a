pub mod cubature;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod pointfile;
pub mod points;
pub mod quadrature;
pub mod sphere;
pub mod targets;
pub mod stein;
