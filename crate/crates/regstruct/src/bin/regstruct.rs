fn main() {
    std::process::exit(regstruct::cli::main_entry());
}
