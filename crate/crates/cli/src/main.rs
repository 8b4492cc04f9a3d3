fn main() {
    std::process::exit(smpsim_cli::main_with(std::env::args_os()));
}
