fn main() {
    std::process::exit(periodic_fpe::cli::run(std::env::args_os()));
}
