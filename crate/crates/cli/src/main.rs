fn main() {
    std::process::exit(alm_panoc_cli::run(std::env::args_os()));
}
