fn main() {
    std::process::exit(koopreg::cli::run_from(std::env::args_os()));
}
