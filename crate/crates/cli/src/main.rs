fn main() {
    std::process::exit(ris_chanest_cli::run(std::env::args_os()));
}
