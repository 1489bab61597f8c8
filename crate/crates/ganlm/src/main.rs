fn main() {
    std::process::exit(ganlm::cli::run());
}
