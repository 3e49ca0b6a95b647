fn main() {
    std::process::exit(phnet::cli::main());
}
