fn main() {
    std::process::exit(speedsynth::cli::run(std::env::args_os()));
}
