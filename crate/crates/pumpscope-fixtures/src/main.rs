use std::path::PathBuf;
use std::process::ExitCode;

fn main() -> ExitCode {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next() else {
        eprintln!("usage: pumpscope-fixtures <dir> [seed]");
        return ExitCode::from(2);
    };
    let seed = match args.next().map(|s| s.parse::<u64>()) {
        None => 7,
        Some(Ok(seed)) => seed,
        Some(Err(_)) => {
            eprintln!("seed must be an unsigned integer");
            return ExitCode::from(2);
        }
    };
    match pumpscope_fixtures::generate(&PathBuf::from(&dir), seed) {
        Ok(fixture) => {
            let truth = &fixture.truth;
            println!("fixture written to {dir} (seed {seed})");
            println!(
                "  messages {} | matched {} | merged {} | clean {} | analyzed {}",
                truth.messages,
                truth.matched,
                truth.events_merged,
                truth.events_clean,
                truth.events_analyzed
            );
            println!("  config: {}", fixture.config.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("fixture generation failed: {err}");
            ExitCode::FAILURE
        }
    }
}
