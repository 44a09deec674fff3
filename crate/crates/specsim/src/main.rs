fn main() {
    std::process::exit(specsim::cli::run());
}
