fn main() {
    std::process::exit(penflow::harness::cli(std::env::args_os()));
}
