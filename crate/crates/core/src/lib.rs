pub mod catalog;
pub mod cli;
pub mod datum;
pub mod error;
pub mod fourier;
pub mod gaussian;
pub mod gaussian_bl;
pub mod integrator;
pub mod linalg;
pub mod optim;
pub mod optimizer;
pub mod stability_lab;
