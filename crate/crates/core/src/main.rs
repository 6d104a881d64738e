fn main() {
    std::process::exit(oovtrack::cli::main());
}
