fn main() -> std::process::ExitCode {
    hyperlocal::app::cli::main()
}
