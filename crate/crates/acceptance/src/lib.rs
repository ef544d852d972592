//! Holds the end-to-end acceptance run (`cargo test -p basnet-acceptance`).
