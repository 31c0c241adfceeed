//! Prints Monte-Carlo calibration constants: `cargo run --example calibrate -- 10000000 0`.

fn main() -> Result<(), qfm::Error> {
    let mut args = std::env::args().skip(1);
    let samples = args
        .next()
        .map_or(10_000_000, |s| s.parse().expect("sample count"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    let start = std::time::Instant::now();
    let c = qfm::noise::calibrate_constants(samples, seed)?;
    println!("{}", c.to_json());
    eprintln!("{:.2?}", start.elapsed());
    Ok(())
}
