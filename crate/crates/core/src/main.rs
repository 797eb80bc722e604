fn main() {
    std::process::exit(kantlab::cli::dispatch(std::env::args_os()));
}
