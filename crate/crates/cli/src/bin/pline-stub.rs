//! Small deterministic program used as a plugin in tests.
//!
//! ```text
//! pline-stub echo ARGS...      print the remaining argv as a JSON array
//! pline-stub produce N         print N numbered lines
//! pline-stub consume FILE|-    number and upper-case each line, then a count
//! pline-stub sleep MS          sleep in 10 ms ticks, then print "slept MS"
//! pline-stub exit CODE         exit with CODE
//! ```

use std::io::{self, BufRead, BufWriter, Write};
use std::process::ExitCode;
use std::time::Duration;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some((mode, rest)) = args.split_first() else {
        eprintln!("usage: pline-stub MODE ARGS...");
        return ExitCode::from(2);
    };
    let num = |i: usize| rest.get(i).and_then(|s| s.parse::<u64>().ok());
    let out = io::stdout();
    let mut out = BufWriter::new(out.lock());
    let res = match mode.as_str() {
        "echo" => serde_json::to_writer(&mut out, rest).map_err(io::Error::from).and_then(|_| writeln!(out)),
        "produce" => (1..=num(0).unwrap_or(10)).try_for_each(|i| writeln!(out, "line {i}")),
        "consume" => consume(rest.first().map(String::as_str).unwrap_or("-"), &mut out),
        "sleep" => {
            let ms = num(0).unwrap_or(100);
            for _ in 0..ms / 10 {
                std::thread::sleep(Duration::from_millis(10));
            }
            std::thread::sleep(Duration::from_millis(ms % 10));
            writeln!(out, "slept {ms}")
        }
        "exit" => {
            let code = rest.first().and_then(|s| s.parse::<u8>().ok()).unwrap_or(1);
            return ExitCode::from(code);
        }
        other => {
            eprintln!("unknown mode '{other}'");
            return ExitCode::from(2);
        }
    };
    match res.and_then(|_| out.flush()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pline-stub: {e}");
            ExitCode::FAILURE
        }
    }
}

fn consume(path: &str, out: &mut impl Write) -> io::Result<()> {
    let input: Box<dyn BufRead> = if path == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(io::BufReader::new(std::fs::File::open(path)?))
    };
    let mut n = 0u64;
    for line in input.lines() {
        n += 1;
        writeln!(out, "{n}\t{}", line?.to_uppercase())?;
    }
    writeln!(out, "count {n}")
}
