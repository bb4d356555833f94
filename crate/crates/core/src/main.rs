fn main() {
    std::process::exit(mslevy::cli::main_with_args(std::env::args_os()));
}
