fn main() {
    std::process::exit(hinv::cli_main(std::env::args_os()));
}
