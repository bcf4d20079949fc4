fn main() {
    std::process::exit(qep_cli::run(std::env::args_os()));
}
