//! The fraclab guide. Each chapter of `book/src` is included as a module
//! doc so `cargo test` runs its code blocks.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/delone.md")]
pub mod delone {}
#[doc = include_str!("../../../book/src/energy.md")]
pub mod energy {}
#[doc = include_str!("../../../book/src/capacity.md")]
pub mod capacity {}
#[doc = include_str!("../../../book/src/homogenization.md")]
pub mod homogenization {}
#[doc = include_str!("../../../book/src/random.md")]
pub mod random {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
