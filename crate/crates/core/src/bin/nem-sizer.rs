fn main() {
    std::process::exit(nem_sizer::cli::run(std::env::args_os()));
}
