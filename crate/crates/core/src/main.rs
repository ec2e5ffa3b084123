fn main() {
    std::process::exit(so3_align::cli::cli_main(std::env::args_os()));
}
