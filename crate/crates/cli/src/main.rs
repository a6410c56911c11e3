fn main() {
    std::process::exit(ctc_rescore_cli::run(std::env::args_os()));
}
