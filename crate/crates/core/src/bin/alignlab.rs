fn main() {
    std::process::exit(alignlab::harness::cli::run(std::env::args()));
}
