fn main() -> std::process::ExitCode {
    nilm::cli::main()
}
