fn main() {
    std::process::exit(concept_qda::cli::run(std::env::args_os()));
}
