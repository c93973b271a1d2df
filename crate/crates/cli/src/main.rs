fn main() -> std::process::ExitCode {
    specvid_cli::main_entry()
}
