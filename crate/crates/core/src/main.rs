fn main() {
    std::process::exit(behavior_discovery::cli::run(std::env::args_os()));
}
