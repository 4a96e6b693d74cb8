pub mod autodiff;
pub mod data;
pub mod model;
pub mod objectives;
pub mod metrics;
pub mod config;
pub mod train;
pub mod run;
