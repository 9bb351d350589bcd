fn main() {
    std::process::exit(hauslip::cli::main_entry());
}
