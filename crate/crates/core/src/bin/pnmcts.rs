fn main() {
    std::process::exit(pnmcts::cli::main());
}
