fn main() {
    std::process::exit(basnet::cli::main());
}
