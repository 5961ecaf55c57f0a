fn main() {
    std::process::exit(nodeperf::cli::run_from_args());
}
