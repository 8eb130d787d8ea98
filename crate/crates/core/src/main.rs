fn main() {
    std::process::exit(nonharmonic::cli::main());
}
