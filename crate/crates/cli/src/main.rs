fn main() {
    std::process::exit(cuspwind_cli::run_command(std::env::args_os()));
}
