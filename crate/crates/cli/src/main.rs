fn main() {
    std::process::exit(fex_cli::run_from_env());
}
