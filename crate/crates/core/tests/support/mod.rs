//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

pub mod fd_plate;
pub mod osc_ref;
pub mod resolver_ref;
