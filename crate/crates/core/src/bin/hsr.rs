fn main() {
    std::process::exit(hsr_core::cli::main(std::env::args_os()));
}
