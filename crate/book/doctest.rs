// mdbook cannot run listings that depend on a workspace crate, so every
// chapter is pulled in as a module doc and `cargo test --doc` runs them. One
// module per chapter keeps failures traceable to a file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/dynamics.md")]
pub mod dynamics {}
#[doc = include_str!("src/identification.md")]
pub mod identification {}
#[doc = include_str!("src/diagnostics.md")]
pub mod diagnostics {}
#[doc = include_str!("src/kernelization.md")]
pub mod kernelization {}
#[doc = include_str!("src/synthetic.md")]
pub mod synthetic {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
