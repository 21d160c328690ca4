//! The guide in `book/` and the README compiled as documentation, so that
//! every Rust listing in them runs under `cargo test --doc`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/ingest.md")]
pub mod ingest {}
#[doc = include_str!("../../../book/src/storms.md")]
pub mod storms {}
#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}
#[doc = include_str!("../../../book/src/classification.md")]
pub mod classification {}
#[doc = include_str!("../../../book/src/extremes.md")]
pub mod extremes {}
#[doc = include_str!("../../../book/src/synthetic.md")]
pub mod synthetic {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    /// Every chapter listed in SUMMARY.md is included above, and vice versa.
    #[test]
    fn summary_matches_modules() {
        let summary = include_str!("../../../book/src/SUMMARY.md");
        let listed: BTreeSet<&str> = summary
            .lines()
            .filter_map(|l| l.split("](").nth(1)?.strip_suffix(')'))
            .collect();
        let here = include_str!("lib.rs");
        let included: BTreeSet<&str> = here
            .lines()
            .filter_map(|l| l.strip_prefix("#[doc = include_str!(\"../../../book/src/")?.strip_suffix("\")]"))
            .collect();
        assert_eq!(listed, included);
    }
}
