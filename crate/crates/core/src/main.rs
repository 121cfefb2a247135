use clap::Parser;

fn main() {
    let verbose = lesionseg::cli::Cli::try_parse().map(|c| c.verbose).unwrap_or(0);
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(lesionseg::cli::log_level(verbose)))
        .format_timestamp(None)
        .init();
    std::process::exit(lesionseg::cli::run(std::env::args_os()));
}
