fn main() {
    std::process::exit(rds_cli::run(std::env::args_os()));
}
