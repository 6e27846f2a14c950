fn main() -> std::process::ExitCode {
    cogrelay::cli::main()
}
