//! The guide in `book/` pulled in as doc modules, so `cargo test` runs
//! every listing. mdbook cannot resolve workspace crates on its own.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/fields.md")]
pub mod fields {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/planning.md")]
pub mod planning {}
#[doc = include_str!("../../../book/src/sessions.md")]
pub mod sessions {}
#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}
