// benchmark-only crate; see benches/hot_paths.rs
