//! Discretized nonlocal operators, constrained energy minimization and
//! executable symmetry checks for their minimizers.
//!
//! The modules follow the pipeline: [`kernels`] and [`geometry`] describe the
//! problem, [`form`] assembles the discrete bilinear form and operator,
//! [`energy`] minimizes, [`symmetry`] inspects the result and [`verify`]
//! tests maximum principles behind the reflection arguments. [`cli`] and
//! [`config`] drive all of it from a TOML file.

// `!(x > 0.0)` is how NaN is rejected throughout; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod energy;
pub mod error;
pub mod form;
pub mod geometry;
pub mod kernels;
pub mod quadrature;
pub mod symmetry;
pub mod verify;

// Book chapters run as doctests so their snippets cannot rot.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    pub mod kernels {}
    #[doc = include_str!("../../../book/src/discrete-form.md")]
    pub mod discrete_form {}
    #[doc = include_str!("../../../book/src/energy.md")]
    pub mod energy {}
    #[doc = include_str!("../../../book/src/symmetry.md")]
    pub mod symmetry {}
    #[doc = include_str!("../../../book/src/maximum-principles.md")]
    pub mod maximum_principles {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
