//! Configuration, commands, experiments and artifact emission for the
//! `manhattan` binary.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod report;
pub mod svg;
