//! Compile prompts into adjustment plans.
//!
//! cargo run --example parse_prompt -- "brighten the sky a little and warm it slightly"
//! cargo run --example parse_prompt -- --file data/grammar_corpus.txt

use lumapolish::promptparse;

fn show(prompt: &str) -> bool {
    match promptparse::parse(prompt) {
        Ok(plan) => {
            println!("{prompt}\n  -> {}", promptparse::explain(&plan));
            true
        }
        Err(e) => {
            println!("{prompt}\n  !! {e}");
            if let Some(span) = e.span() {
                let pad = prompt[..span.start.min(prompt.len())].chars().count();
                let width = span.len().max(1);
                println!("     {}{}", " ".repeat(pad), "^".repeat(width));
            }
            false
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let prompts: Vec<String> = match args.as_slice() {
        [flag, path] if flag == "--file" => std::fs::read_to_string(path)
            .expect("readable corpus")
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect(),
        [] => vec![
            "brighten the lamp a little".into(),
            "darken it a little".into(),
            "increase saturation by 25% and sharpen it slightly".into(),
        ],
        _ => args,
    };
    let ok = prompts.iter().filter(|p| show(p)).count();
    println!("\n{ok}/{} parsed", prompts.len());
}
