fn main() {
    std::process::exit(powersched::cli::main());
}
