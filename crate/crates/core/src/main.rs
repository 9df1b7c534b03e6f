fn main() {
    std::process::exit(biomass_core::cli::run(std::env::args_os()));
}
