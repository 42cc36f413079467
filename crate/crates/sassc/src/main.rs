fn main() {
    std::process::exit(sassc::run(std::env::args_os()));
}
