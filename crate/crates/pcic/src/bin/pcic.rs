fn main() {
    std::process::exit(pcic::cli::run(std::env::args_os()));
}
