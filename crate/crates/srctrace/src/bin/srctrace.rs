fn main() {
    std::process::exit(srctrace::cli::main_with(std::env::args_os()));
}
