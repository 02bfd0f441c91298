fn main() {
    std::process::exit(convsearch::cli::run(std::env::args_os()));
}
