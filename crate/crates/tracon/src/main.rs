//! Binary entry point; all behavior lives in [`tracon::cli`].

fn main() {
    std::process::exit(tracon::cli::run());
}
