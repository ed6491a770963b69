fn main() -> std::process::ExitCode {
    gfn_levels::cli::main()
}
