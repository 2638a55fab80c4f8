use clap::Parser;

use ecodrive::cli::{error_json, exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    match run(&cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
        }
        Err(err) => {
            eprintln!("{}", error_json(&err));
            std::process::exit(exit_code(&err));
        }
    }
}
