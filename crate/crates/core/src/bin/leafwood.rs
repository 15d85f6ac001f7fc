fn main() {
    std::process::exit(leafwood::cli::run(std::env::args_os()));
}
