fn main() {
    std::process::exit(opesel::cli::run(std::env::args_os()));
}
