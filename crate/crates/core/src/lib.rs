pub mod cli;
pub mod config;
pub mod linalg;
pub mod model;
pub mod mpc;
pub mod plants;
pub mod report;
pub mod sim;
pub mod solvers;
