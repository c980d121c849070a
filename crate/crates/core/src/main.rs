fn main() -> std::process::ExitCode {
    csforge::cli::main()
}
