fn main() {
    if let Err(e) = pepi_cli::run_command(std::env::args_os()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
