// mdbook cannot run listings that depend on workspace crates, so every
// chapter is pulled into this crate as a doc comment and `cargo test --doc`
// runs the listings. One module per chapter keeps failures traceable.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/front-ends.md")]
pub mod front_ends {}
#[doc = include_str!("src/graph.md")]
pub mod graph {}
#[doc = include_str!("src/network.md")]
pub mod network {}
#[doc = include_str!("src/stylization.md")]
pub mod stylization {}
#[doc = include_str!("src/baseline.md")]
pub mod baseline {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
