use pointcert::network::read_points;
use pointcert::taylor::{taylor_bounds, LinearBounds};
use pointcert::PointCloud;

use super::{print_out, transform_box, write_json};
use crate::args::RelaxArgs;
use crate::report::{RelaxDump, RelaxRow, REPORT_VERSION};
use crate::Status;

pub fn dump(transform: String, cloud: &PointCloud, bounds: &LinearBounds) -> RelaxDump {
    let rows = (0..bounds.len())
        .map(|row| {
            let (l, u) = (bounds.lower_row(row), bounds.upper_row(row));
            RelaxRow {
                point: row / 3,
                coord: row % 3,
                w_lower: l.weights.to_vec(),
                b_lower: l.bias,
                w_upper: u.weights.to_vec(),
                b_upper: u.bias,
            }
        })
        .collect();
    RelaxDump {
        version: REPORT_VERSION,
        transform,
        lo: bounds.params().lo().to_vec(),
        hi: bounds.params().hi().to_vec(),
        points: cloud.points().iter().map(|p| p.to_array()).collect(),
        rows,
    }
}

pub fn run(args: &RelaxArgs) -> anyhow::Result<Status> {
    let cloud = read_points(&args.points)?;
    let (transform, params) = transform_box(&args.transform)?;
    let bounds = taylor_bounds(transform.as_ref(), &cloud, &params)?;
    let d = dump(transform.name(), &cloud, &bounds);
    match &args.output {
        Some(path) => write_json(path, &d)?,
        None => print_out(&(serde_json::to_string_pretty(&d)? + "\n"))?,
    }
    Ok(Status::Pass)
}
