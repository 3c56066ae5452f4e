fn main() {
    std::process::exit(tagshield::cli::main());
}
