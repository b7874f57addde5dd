fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let code = digmol::cli::run(std::env::args_os(), &mut out, &mut err);
    std::process::exit(code);
}
