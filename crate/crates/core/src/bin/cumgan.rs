use std::io;

use cumgan::experiments::{cli, SEED_ENV};

fn main() {
    let seed = std::env::var(SEED_ENV).ok();
    let code = cli::run(
        std::env::args_os(),
        seed.as_deref(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    std::process::exit(code);
}
