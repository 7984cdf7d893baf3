fn main() {
    std::process::exit(visnet_plastic::cli::main_with(std::env::args_os()));
}
