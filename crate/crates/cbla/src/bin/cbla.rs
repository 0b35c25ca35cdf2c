fn main() {
    std::process::exit(cbla::cli::run());
}
