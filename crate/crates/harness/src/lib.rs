pub mod config;
pub mod reference;
pub mod commands;
