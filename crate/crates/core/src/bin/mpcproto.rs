fn main() {
    std::process::exit(mpcproto::cli::main_with_args(std::env::args_os()));
}
