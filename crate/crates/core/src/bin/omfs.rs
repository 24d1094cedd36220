fn main() {
    std::process::exit(omfs::cli::run(std::env::args_os()));
}
