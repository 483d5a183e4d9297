fn main() {
    std::process::exit(povm_sim::cli::run(std::env::args_os()));
}
