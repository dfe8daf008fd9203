fn main() {
    std::process::exit(lumapolish::cli::run());
}
