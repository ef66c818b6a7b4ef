fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::panic::set_hook(Box::new(|info| eprintln!("{info}")));
    std::process::exit(nvmap_cli::main_with_args(std::env::args_os()));
}
