fn main() {
    std::process::exit(entrogame::cli::main(std::env::args_os()));
}
