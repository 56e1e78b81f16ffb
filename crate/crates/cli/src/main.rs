fn main() {
    std::process::exit(cutlab::run(std::env::args_os()));
}
