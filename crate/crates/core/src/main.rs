fn main() {
    std::process::exit(rpde_lab::cli::main_with(std::env::args_os()));
}
