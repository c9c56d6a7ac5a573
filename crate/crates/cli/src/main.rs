fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(arblab_cli::run(&argv));
}
