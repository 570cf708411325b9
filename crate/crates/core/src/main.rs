fn main() {
    std::process::exit(mfrom::cli::run(std::env::args_os()));
}
