fn main() {
    std::process::exit(neckglue::cli::main(std::env::args_os()));
}
