//! Serves the deterministic synthetic model over stdin/stdout frames, for
//! exercising the sidecar transport without a real model.

use std::io::{stdin, stdout, BufReader, BufWriter};
use std::process::ExitCode;

use vprompt::bridge::{serve, SyntheticModel};

fn main() -> ExitCode {
    let model = SyntheticModel::default();
    let reader = BufReader::new(stdin().lock());
    // every frame is flushed by the protocol writer
    let writer = BufWriter::new(stdout().lock());
    match serve(&model, reader, writer) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("synthetic_sidecar: {e}");
            ExitCode::FAILURE
        }
    }
}
