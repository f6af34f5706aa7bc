fn main() {
    std::process::exit(durable_monopoly::cli::main());
}
