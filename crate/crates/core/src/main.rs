fn main() {
    std::process::exit(sarclip::cli::run(std::env::args_os()));
}
