fn main() {
    std::process::exit(gflm_cli::run(std::env::args_os()));
}
