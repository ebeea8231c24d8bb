fn main() -> std::process::ExitCode {
    essay_scorer::cli::main()
}
