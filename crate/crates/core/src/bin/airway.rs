fn main() {
    std::process::exit(airway::cli::run(std::env::args_os()));
}
