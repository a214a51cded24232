//! Test provider: reads requests of `--frames N` frames (default 1) from
//! stdin and answers each with its first frame. `--sleep-ms M` delays every
//! reply; `--garbage` replies with bytes that are not a frame.

use std::io::{BufReader, BufWriter, Write};

use tissuesplat_core::priors::wire::{read_frame, write_frame};

fn main() {
    let mut frames = 1usize;
    let mut sleep_ms = 0u64;
    let mut garbage = false;
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--frames" => frames = args.next().and_then(|v| v.parse().ok()).expect("--frames N"),
            "--sleep-ms" => sleep_ms = args.next().and_then(|v| v.parse().ok()).expect("--sleep-ms M"),
            "--garbage" => garbage = true,
            other => {
                eprintln!("unknown argument {other}");
                std::process::exit(2);
            }
        }
    }
    let mut input = BufReader::new(std::io::stdin().lock());
    let mut output = BufWriter::new(std::io::stdout().lock());
    loop {
        let mut first = None;
        for _ in 0..frames {
            match read_frame(&mut input) {
                Ok(Some(f)) => {
                    first.get_or_insert(f);
                }
                Ok(None) => return,
                Err(e) => {
                    eprintln!("{e}");
                    std::process::exit(1);
                }
            }
        }
        if sleep_ms > 0 {
            std::thread::sleep(std::time::Duration::from_millis(sleep_ms));
        }
        let written = if garbage {
            output.write_all(b"NOT A FRAME AT ALL!!")
        } else {
            write_frame(&mut output, &first.expect("frames >= 1"))
        };
        if written.and_then(|_| output.flush()).is_err() {
            return;
        }
    }
}
