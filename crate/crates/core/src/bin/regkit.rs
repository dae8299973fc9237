fn main() -> std::process::ExitCode {
    regkit::cli::main()
}
