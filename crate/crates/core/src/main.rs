fn main() {
    std::process::exit(manifold_fit::harness::run_cli(std::env::args_os()));
}
