fn main() {
    std::process::exit(g2p_harness::cli::main_with_args(std::env::args_os()));
}
