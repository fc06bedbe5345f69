fn main() -> std::process::ExitCode {
    knitpad_service::cli::main()
}
