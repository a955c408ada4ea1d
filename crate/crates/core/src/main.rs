fn main() {
    std::process::exit(mhcap::cli::run(std::env::args_os()));
}
