//! Command implementations behind the `ikp` binary.

pub mod ablate;
pub mod annotation;
pub mod commands;
pub mod config;
pub mod layout;

use std::fmt;

pub use config::RunConfig;

/// A user-facing validation problem (bad input file, inconsistent
/// arguments). Maps to exit code 2.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ValidationError(msg.into()).into()
}

/// Process exit code for an error: 3 for numerical failures, 2 for
/// validation errors, 1 for anything else (I/O).
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<implicit_keypoints::Error>() {
            return match e {
                e if e.is_numerical() => 3,
                implicit_keypoints::Error::Io(_) => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<ValidationError>().is_some() {
            return 2;
        }
    }
    1
}

/// Independent seed for stream `stream` of shape `index`.
pub fn derive_seed(base: u64, index: usize, stream: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(base ^ splitmix((index as u64) << 8 | stream))
}

pub mod streams {
    pub const KEYPOINTS: u64 = 0;
    pub const FIT_SDF: u64 = 2;
    pub const FIT_UDF: u64 = 3;
}
