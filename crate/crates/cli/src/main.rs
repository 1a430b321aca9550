fn main() {
    std::process::exit(fb_cli::run(std::env::args_os()));
}
