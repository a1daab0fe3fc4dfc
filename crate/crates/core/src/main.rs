fn main() {
    std::process::exit(blockwise::cli::run(std::env::args_os()));
}
