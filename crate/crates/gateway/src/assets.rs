//! Defaults compiled into the binary so every subcommand works without a
//! data directory.

pub const ARENA_TOML: &str = include_str!("../../../data/arena.toml");
pub const CONFIG_TOML: &str = include_str!("../../../data/config.toml");
pub const SNAPSHOT: &[u8] = include_bytes!("../../../data/default_snapshot.pinw");
pub const FACTORS_TOML: &str = include_str!("../../../data/factors.toml");
pub const INDEX_HTML: &str = include_str!("../static/index.html");
