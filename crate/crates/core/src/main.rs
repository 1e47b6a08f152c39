fn main() {
    std::process::exit(nasnet_vit::cli::run(std::env::args().skip(1)));
}
