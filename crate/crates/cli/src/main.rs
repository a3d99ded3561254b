fn main() {
    std::process::exit(suborbit_cli::run(std::env::args_os()));
}
