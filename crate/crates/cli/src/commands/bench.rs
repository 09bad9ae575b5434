use std::fmt::Write as _;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::time::{Duration, Instant};

use pointcert::synth::random_cloud;
use pointcert::taylor::{taylor_bounds, LinearBounds};
use pointcert::{parse_transform, ParamBox};

use super::{emit, write_json};
use crate::args::BenchArgs;
use crate::report::{BenchReport, BenchRow, REPORT_VERSION};
use crate::Status;

fn checksum(bounds: &LinearBounds) -> String {
    let mut h = DefaultHasher::new();
    for row in 0..bounds.len() {
        for side in [bounds.lower_row(row), bounds.upper_row(row)] {
            side.bias.to_bits().hash(&mut h);
            side.weights.iter().for_each(|w| w.to_bits().hash(&mut h));
        }
    }
    format!("{:016x}", h.finish())
}

pub fn run(args: &BenchArgs) -> anyhow::Result<Status> {
    anyhow::ensure!(!args.sizes.is_empty(), "no sizes given");
    anyhow::ensure!(args.sizes.iter().all(|n| *n > 0), "sizes must be positive");
    anyhow::ensure!(args.repeats > 0, "--repeats must be positive");
    let transform = parse_transform(&args.transform)?;
    let k = transform.param_count();
    let params = if args.ranges.is_empty() {
        ParamBox::symmetric(&vec![3f64.to_radians(); k])?
    } else {
        anyhow::ensure!(args.ranges.len() == k, "`{}` takes {k} parameter(s)", transform.name());
        ParamBox::new(args.ranges.iter().map(|r| r.lo).collect(), args.ranges.iter().map(|r| r.hi).collect())?
    };

    let mut rows = Vec::new();
    for &n in &args.sizes {
        let cloud = random_cloud(n, args.seed);
        let mut best = Duration::MAX;
        let mut sum = String::new();
        for _ in 0..args.repeats {
            let t = Instant::now();
            let bounds = taylor_bounds(transform.as_ref(), &cloud, &params)?;
            best = best.min(t.elapsed());
            sum = checksum(&bounds);
        }
        let seconds = best.as_secs_f64().max(f64::MIN_POSITIVE);
        rows.push(BenchRow {
            points: n,
            seconds,
            points_per_second: n as f64 / seconds,
            checksum: sum,
        });
    }
    let ratio = (rows.len() > 1).then(|| rows[rows.len() - 1].seconds / rows[0].seconds);

    let mut text = format!("{:>10}  {:>10}  {:>14}  checksum\n", "points", "seconds", "points/s");
    for r in &rows {
        writeln!(text, "{:>10}  {:>10.4}  {:>14.0}  {}", r.points, r.seconds, r.points_per_second, r.checksum)?;
    }
    if let Some(ratio) = ratio {
        writeln!(text, "ratio largest/smallest: {ratio:.3}")?;
    }
    let report = BenchReport {
        version: REPORT_VERSION,
        command: "bench",
        transform: transform.name(),
        lo: params.lo().to_vec(),
        hi: params.hi().to_vec(),
        seed: args.seed,
        repeats: args.repeats,
        rows,
        ratio,
    };
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    emit(args.format, &text, &report)?;
    Ok(Status::Pass)
}
