fn main() {
    std::process::exit(tskanmixer::cli::main());
}
