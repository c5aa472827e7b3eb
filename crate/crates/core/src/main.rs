fn main() {
    std::process::exit(jumptime::cli::run(std::env::args_os()));
}
