fn main() {
    std::process::exit(loadtex::cli::run(std::env::args_os()));
}
