fn main() {
    let code = retarda_cli::run_cli(
        std::env::args_os(),
        &|k| std::env::var(k).ok(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    std::process::exit(code);
}
