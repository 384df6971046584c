fn main() {
    std::process::exit(varindex_cli::run(std::env::args_os()));
}
