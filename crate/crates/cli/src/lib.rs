//! Headless driver for Reflexa sessions: scripted runs, replay, export and
//! questionnaire scoring.

pub mod export;
pub mod replay;
pub mod rice;
pub mod script;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const ENGINE: i32 = 2;
    pub const IO: i32 = 3;
}
