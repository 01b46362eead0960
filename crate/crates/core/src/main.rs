use std::io;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let threads = std::env::var(cevlab::cli::THREADS_ENV).ok();
    let code = cevlab::cli::main_with_args(
        &args,
        threads.as_deref(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    std::process::exit(code);
}
