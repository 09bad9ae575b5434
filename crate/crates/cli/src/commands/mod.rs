pub mod bench;
pub mod certify;
pub mod inspect;
pub mod relax;
pub mod selftest;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use pointcert::{parse_transform, ParamBox, Transform};

use crate::args::{Format, TransformArgs};

/// The transformation and its box, checked against each other.
pub fn transform_box(args: &TransformArgs) -> anyhow::Result<(Arc<dyn Transform>, ParamBox)> {
    let name = args.transform.as_deref().context("--transform is required")?;
    let transform = parse_transform(name)?;
    let k = transform.param_count();
    anyhow::ensure!(
        args.ranges.len() == k,
        "`{}` takes {k} parameter(s) but {} --range value(s) were given",
        transform.name(),
        args.ranges.len()
    );
    let params = ParamBox::new(args.ranges.iter().map(|r| r.lo).collect(), args.ranges.iter().map(|r| r.hi).collect())?;
    Ok((transform, params))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

/// Prints either the text summary or the JSON document.
pub fn emit(format: Format, text: &str, value: &impl serde::Serialize) -> anyhow::Result<()> {
    match format {
        Format::Text => print_out(text),
        Format::Json => print_out(&(serde_json::to_string_pretty(value)? + "\n")),
    }
}

/// Writes to stdout, reporting failures (such as a closed pipe) as errors.
pub fn print_out(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}
