fn main() {
    std::process::exit(freeconv_cli::run(std::env::args_os()));
}
