fn main() {
    std::process::exit(layer_resonance::cli::main_with_args(std::env::args_os()));
}
