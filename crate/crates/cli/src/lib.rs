//! Command-line front end for the tag-tracking coprocessor simulator.
//!
//! The binary is `dift`; see `dift --help` for the subcommand list. The
//! crate also exposes its plumbing so integration tests can drive the same
//! code paths the binary does.

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub mod args;
pub mod commands;
pub mod io;

/// Demonstration assets compiled into the binary, so `demo-attack` works
/// from any directory with nothing else installed.
pub mod embedded {
    /// A program that copies a word of a tagged secret into a public log.
    pub const SECRET_LEAK_TOY: &str =
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/demo_secret_leak.toy"));
    /// The same leak, but the copy runs inside a library helper.
    pub const LIB_WRAPPER_TOY: &str =
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/demo_lib_wrapper.toy"));
    /// Propagation policy with a tripwire on tagged load/store transfers.
    pub const STORE_CHECK_POL: &str =
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/policies/store_check.pol"));
    /// Propagate-everything policy with no checks.
    pub const TAINT_OR_POL: &str =
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/policies/taint_or.pol"));
    /// The secret file's contents.
    pub const SECRET_BIN: &[u8] =
        include_bytes!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/files/secret.bin"));
}

/// Parses `argv` and runs the selected subcommand, returning the process
/// exit code: 0 success / nothing found, 1 detection or difference, 2 for
/// usage and input errors.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            2
        }
    }
}
