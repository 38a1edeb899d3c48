fn main() {
    let workers = std::env::var(cavity_phase::run::WORKERS_ENV).ok();
    std::process::exit(cavity_phase::run::main_with(std::env::args_os(), workers.as_deref()));
}
