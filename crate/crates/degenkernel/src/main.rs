fn main() {
    std::process::exit(degenkernel::cli::run());
}
