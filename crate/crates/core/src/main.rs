fn main() {
    std::process::exit(qslit::cli::run(std::env::args_os()));
}
