use clap::Parser;

mod cli;

fn main() {
    let args = cli::Cli::parse();
    match cli::execute(args) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            let config_error = err
                .downcast_ref::<spy::Error>()
                .is_some_and(spy::Error::is_config);
            std::process::exit(if config_error { 2 } else { 1 });
        }
    }
}
