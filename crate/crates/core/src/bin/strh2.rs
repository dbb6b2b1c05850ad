fn main() {
    std::process::exit(strh2::cli::run(std::env::args_os()));
}
