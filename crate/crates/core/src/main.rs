fn main() {
    std::process::exit(gtare::cli::main());
}
