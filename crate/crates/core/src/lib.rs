// Parameter checks are written `!(x > 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod band;
pub mod compare;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod library;
pub mod model;
pub mod ode;
pub mod pipeline;
pub mod plant;
pub mod poly;
pub mod regression;
pub mod render;
pub mod selection;
pub mod tvdiff;

pub use error::{Error, Result};
