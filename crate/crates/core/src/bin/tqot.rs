use clap::Parser;

fn main() {
    let args = tqot::cli::Args::parse();
    std::process::exit(tqot::cli::run(&args));
}
