fn main() {
    std::process::exit(qbd_core::cli::run(std::env::args_os()));
}
