fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(fracmap::cli::run_cli(&args));
}
