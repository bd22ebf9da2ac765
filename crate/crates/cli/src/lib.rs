//! Library half of the `treesample` command: benchmark and verification
//! drivers shared by the binary and its tests.

pub mod battery;
pub mod bench;
