fn main() {
    std::process::exit(drowsy::cli::main());
}
