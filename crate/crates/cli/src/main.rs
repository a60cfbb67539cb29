fn main() {
    std::process::exit(knockoff_fdr_cli::run(std::env::args_os()));
}
