fn main() {
    std::process::exit(covdim::cli::run(std::env::args_os()));
}
