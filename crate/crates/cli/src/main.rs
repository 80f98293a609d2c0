fn main() {
    std::process::exit(neurosym_cli::cli_main(std::env::args_os()));
}
