pub mod cmmd;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod points;
pub mod qp;
pub mod sieve;
pub mod data;
pub mod estimator;
pub mod inference;
pub mod simulation;
