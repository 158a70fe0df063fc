fn main() {
    std::process::exit(evgrid::cli::run());
}
