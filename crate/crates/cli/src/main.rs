fn main() {
    dglmnet_cli::init_logging();
    std::process::exit(dglmnet_cli::run(std::env::args_os()));
}
