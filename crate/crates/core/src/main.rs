fn main() {
    std::process::exit(serfkit::cli::dispatch(std::env::args_os()));
}
