fn main() {
    std::process::exit(dr_crossfit::cli::main());
}
