//! Configuration files, the building case study, scheme dispatch and report
//! emission for the `binflex` command.

pub mod case_study;
pub mod config;
pub mod report;
pub mod schemes;
