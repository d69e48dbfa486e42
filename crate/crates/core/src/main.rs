fn main() {
    std::process::exit(transcript_risk::cli::main());
}
