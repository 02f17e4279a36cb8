use clap::Parser;

fn main() {
    let cli = capo::cli::Cli::parse();
    match capo::cli::run(&cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
