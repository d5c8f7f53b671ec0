fn main() {
    std::process::exit(qem::cli::run(std::env::args_os()));
}
