fn main() {
    std::process::exit(psychstate_core::cli::run());
}
