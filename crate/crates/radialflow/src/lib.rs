//! File formats, JSON reports and the command-line driver for
//! [`radialflow_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod format;
pub mod report;
