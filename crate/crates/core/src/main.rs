fn main() {
    std::process::exit(influence_ode::cli::run(std::env::args_os()));
}
