fn main() {
    std::process::exit(brenier::commands::main_with_args(std::env::args_os()));
}
