#![allow(dead_code)]

pub use matsol_core::random::*;
