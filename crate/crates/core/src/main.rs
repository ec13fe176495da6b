fn main() -> std::process::ExitCode {
    fixnet::cli::main()
}
