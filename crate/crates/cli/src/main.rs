fn main() {
    std::process::exit(rsac_cli::main_with(std::env::args_os()));
}
