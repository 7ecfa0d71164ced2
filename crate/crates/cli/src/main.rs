fn main() {
    std::process::exit(skewlab_cli::app::main_with_args(std::env::args_os()));
}
