fn main() {
    std::process::exit(gcn_abft::cli::run(std::env::args_os()));
}
