fn main() {
    std::process::exit(degscope::cli::run(std::env::args_os()));
}
