fn main() {
    std::process::exit(qcover::cli::run());
}
