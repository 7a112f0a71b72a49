fn main() {
    std::process::exit(sdb::cli::run(std::env::args_os()));
}
