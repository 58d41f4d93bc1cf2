fn main() {
    std::process::exit(relu_preimage::cli::main_with_args(std::env::args_os()));
}
