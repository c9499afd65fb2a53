fn main() {
    std::process::exit(matcalc::cli::run());
}
