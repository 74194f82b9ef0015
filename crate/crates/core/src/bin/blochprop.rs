fn main() {
    std::process::exit(blochprop::cli::main_with_args(std::env::args_os()));
}
