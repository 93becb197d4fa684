fn main() {
    std::process::exit(qshape::cli::run(std::env::args_os()));
}
