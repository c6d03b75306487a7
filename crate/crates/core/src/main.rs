fn main() {
    std::process::exit(locality::cli::main_with(std::env::args_os()));
}
