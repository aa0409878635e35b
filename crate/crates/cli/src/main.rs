fn main() {
    std::process::exit(detline::run(std::env::args_os()));
}
