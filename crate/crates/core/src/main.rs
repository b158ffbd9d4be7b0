fn main() -> std::process::ExitCode {
    excursion_core::cli::main()
}
