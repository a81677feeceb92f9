fn main() -> std::process::ExitCode {
    vlmtrack::cli::main()
}
