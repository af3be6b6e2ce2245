// SPDX-License-Identifier: Apache-2.0

use clap::Parser;

use biorel::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        for line in &e.details {
            eprintln!("  {line}");
        }
        std::process::exit(e.exit_code());
    }
}
