fn main() {
    std::process::exit(stereoaudit::cli::run(std::env::args_os()));
}
