fn main() {
    std::process::exit(mpm::cli::run(std::env::args_os()));
}
