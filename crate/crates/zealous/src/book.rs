//! Doc-tests for the guide in `book/`: every fenced Rust block in a
//! chapter is compiled and run by `cargo test --doc`, so the book
//! cannot drift from the library.

macro_rules! chapter {
    ($name:ident, $path:literal) => {
        #[doc = include_str!($path)]
        pub mod $name {}
    };
}

chapter!(introduction, "../../../book/src/introduction.md");
chapter!(search_logs, "../../../book/src/search-logs.md");
chapter!(release_pipeline, "../../../book/src/release-pipeline.md");
chapter!(planning, "../../../book/src/planning.md");
chapter!(guarantees, "../../../book/src/guarantees.md");
chapter!(negative_results, "../../../book/src/negative-results.md");
chapter!(utility, "../../../book/src/utility.md");
chapter!(baseline, "../../../book/src/baseline.md");
chapter!(applications, "../../../book/src/applications.md");
chapter!(cli, "../../../book/src/cli.md");
