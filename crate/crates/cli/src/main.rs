mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use dlsr::{Error, ErrorKind};

use args::{Cli, Command};
use commands::*;

fn run(cli: &Cli) -> Result<(), Error> {
    let ctx = Context::new(cli.seed, cli.config.as_deref(), cli.quiet)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Unmix(a) => unmix_cmd(&ctx, a, out),
        Command::GenDl(a) => gen_dl_cmd(&ctx, a, out),
        Command::Degrade(a) => degrade_cmd(&ctx, a, out),
        Command::Train(a) => train_cmd(&ctx, a, out),
        Command::Sr(a) => sr_cmd(&ctx, a, out),
        Command::Reconstruct(a) => reconstruct_cmd(&ctx, a, out),
        Command::Eval(a) => eval_cmd(&ctx, a),
        Command::Phantom(a) => phantom_cmd(&ctx, a, out),
        Command::Pipeline(a) => pipeline_cmd(&ctx, a, out),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::DataFormat => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // messages already embed their causes
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
