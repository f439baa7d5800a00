fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(linesim_lab::cli::run(args));
}
