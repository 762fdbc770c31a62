fn main() {
    std::process::exit(blstab::cli::dispatch(std::env::args_os()));
}
