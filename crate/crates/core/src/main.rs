fn main() {
    std::process::exit(dsqrt_core::cli::run(std::env::args_os()));
}
