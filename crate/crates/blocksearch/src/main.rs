fn main() {
    std::process::exit(blocksearch::cli::run());
}
