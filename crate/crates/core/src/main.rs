fn main() {
    std::process::exit(timbreclip::cli::main());
}
