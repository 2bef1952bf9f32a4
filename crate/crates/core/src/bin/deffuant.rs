fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(measure_deffuant::cli::main_with_args(&args));
}
