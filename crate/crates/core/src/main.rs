fn main() -> std::process::ExitCode {
    sonomat::cli::main()
}
