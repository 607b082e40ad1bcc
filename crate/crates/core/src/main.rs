fn main() {
    std::process::exit(w2vt::cli::main_with(std::env::args_os()));
}
