fn main() {
    std::process::exit(flowdesign::harness::cli::run(std::env::args_os()));
}
