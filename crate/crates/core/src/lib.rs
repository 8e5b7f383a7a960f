pub mod bl_metric;
pub mod cli;
pub mod expr;
pub mod fpe;
pub mod markov;
pub mod period_map;
pub mod sde;
pub mod semilinear;
