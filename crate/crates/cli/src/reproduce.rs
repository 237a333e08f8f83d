//! Recomputes bundled reference results and reports deviations.
//!
//! Reference values ship as CSV data files compiled into the binary. Each
//! target writes the recomputed artifact with per-cell absolute deviations;
//! any deviation beyond the pinned tolerance makes the command exit 1.

use rab_core::channel::{Channel, ChannelModel2x2, CollisionChannelNxM};
use rab_core::regions::{
    boundary_2src, classify_region_shape, max_lambda1_2src, optimize_lambda_n, BoundObjective,
    Boundary2Kind, RegionShape, SolverSettings,
};

use crate::output::{csv_document, version_string, write_file, write_manifest};
use crate::{manifest, Cli, CliError, ReproduceTarget};

/// Per-cell tolerance for the optimized-rate tables.
const TABLE_TOL: f64 = 0.005;
/// Pointwise tolerance for stability/throughput boundary coincidence.
const COINCIDENCE_TOL: f64 = 1e-4;
/// Minimum strict gap between nested boundaries.
const NESTING_GAP: f64 = 1e-3;
/// Second-difference tolerance for the shape classification.
const SHAPE_TOL: f64 = 1e-3;

const REF_4SRC: &str = include_str!("../data/bounds_4src.csv");
const REF_5_10SRC: &str = include_str!("../data/bounds_5_10src.csv");

pub fn cmd_reproduce(cli: &Cli, target: ReproduceTarget) -> Result<(), CliError> {
    match target {
        ReproduceTarget::Table2 => reproduce_table(cli, "table2", parse_4src()?),
        ReproduceTarget::Table3 => reproduce_table(cli, "table3", parse_5_10src()?),
        ReproduceTarget::Fig3 => reproduce_fig3(cli),
        ReproduceTarget::Fig4 => reproduce_fig4(cli),
    }
}

struct RefRow {
    channel: CollisionChannelNxM,
    fixed: Vec<f64>,
    expected: [f64; 3], // stability_upper, stability_lower, throughput
}

fn data_err(which: &str, line: &str) -> CliError {
    CliError::Invalid(format!("malformed bundled data ({which}): {line}"))
}

fn parse_4src() -> Result<Vec<RefRow>, CliError> {
    let mut rows = Vec::new();
    for line in REF_4SRC.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        if line.starts_with("m,") {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(data_err("4src", line));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| data_err("4src", line));
        let m = f[0].parse::<usize>().map_err(|_| data_err("4src", line))?;
        let q: Vec<f64> = f[1..5].iter().map(|s| num(s)).collect::<Result<_, _>>()?;
        let fixed: Vec<f64> = f[5..8].iter().map(|s| num(s)).collect::<Result<_, _>>()?;
        rows.push(RefRow {
            channel: CollisionChannelNxM::new(4, m, q)?,
            fixed,
            expected: [num(f[8])?, num(f[9])?, num(f[10])?],
        });
    }
    Ok(rows)
}

fn parse_5_10src() -> Result<Vec<RefRow>, CliError> {
    let mut rows = Vec::new();
    for line in REF_5_10SRC.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        if line.starts_with("n,") {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(data_err("5_10src", line));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| data_err("5_10src", line));
        let n = f[0].parse::<usize>().map_err(|_| data_err("5_10src", line))?;
        let fixed: Vec<f64> = f[1]
            .split(';')
            .map(num)
            .collect::<Result<_, _>>()?;
        rows.push(RefRow {
            channel: CollisionChannelNxM::new(n, 10, vec![0.8; n])?,
            fixed,
            expected: [num(f[2])?, num(f[3])?, num(f[4])?],
        });
    }
    Ok(rows)
}

fn reproduce_table(cli: &Cli, name: &str, refs: Vec<RefRow>) -> Result<(), CliError> {
    let solver = SolverSettings::default();
    let mut rows = Vec::new();
    let mut worst: (f64, String) = (0.0, String::new());
    for (i, r) in refs.iter().enumerate() {
        let n = r.channel.n_sources;
        let mut computed = [0.0; 3];
        for (k, obj) in [
            BoundObjective::StabilityUpper,
            BoundObjective::StabilityLower,
            BoundObjective::Throughput,
        ]
        .into_iter()
        .enumerate()
        {
            computed[k] = optimize_lambda_n(&r.channel, &r.fixed, obj, &solver)?.lambda[n - 1];
        }
        let fixed_str = r
            .fixed
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let mut row = format!("{i},{fixed_str}");
        for k in 0..3 {
            let diff = (computed[k] - r.expected[k]).abs();
            row.push_str(&format!(",{:.6},{:.4},{diff:.6}", computed[k], r.expected[k]));
            if diff > worst.0 {
                worst = (diff, format!("row {i} column {k}"));
            }
        }
        rows.push(row);
    }
    let meta = vec![
        format!("rab reproduce {name} ({})", version_string()),
        format!("tolerance: {TABLE_TOL} per cell"),
        format!("worst deviation: {:.6} at {}", worst.0, worst.1),
    ];
    let doc = csv_document(
        &meta,
        "row,fixed,upper,upper_ref,upper_diff,lower,lower_ref,lower_diff,throughput,throughput_ref,throughput_diff",
        &rows,
    );
    let file = format!("{name}.csv");
    write_file(&cli.out, &file, &doc)?;
    let m = manifest(cli, &format!("reproduce {name}"), None, &solver, vec![file]);
    write_manifest(&cli.out, &format!("{name}.manifest.json"), &m)?;
    if worst.0 > TABLE_TOL {
        return Err(CliError::Mismatch(format!(
            "{name}: deviation {:.6} > {TABLE_TOL} at {}",
            worst.0, worst.1
        )));
    }
    println!("{name}: worst deviation {:.6} <= {TABLE_TOL}", worst.0);
    Ok(())
}

fn reference_channels() -> [(&'static str, Channel, RegionShape); 2] {
    [
        (
            "channel_i",
            Channel::Mpr2x2(
                ChannelModel2x2::new([[0.8, 0.6], [0.5, 0.7]], [[0.1, 0.05], [0.05, 0.25]])
                    .unwrap(),
            ),
            // weak multipacket reception: boundary bulges inward
            RegionShape::Concave,
        ),
        (
            "channel_ii",
            Channel::Mpr2x2(
                ChannelModel2x2::new([[0.8, 0.6], [0.6, 0.8]], [[0.5, 0.4], [0.4, 0.5]]).unwrap(),
            ),
            // strong multipacket reception: the region itself is convex
            RegionShape::Convex,
        ),
    ]
}

fn boundary_csv(b: &rab_core::regions::RegionBoundary, meta: Vec<String>) -> String {
    let rows: Vec<String> = b
        .points
        .iter()
        .map(|pt| {
            format!(
                "{:.12},{:.12},{:.9},{:.9},{}",
                pt.lambda[0], pt.lambda[1], pt.p_opt[0], pt.p_opt[1], pt.feasible
            )
        })
        .collect();
    csv_document(&meta, "lambda1,lambda2,p1_opt,p2_opt,feasible", &rows)
}

fn reproduce_fig3(cli: &Cli) -> Result<(), CliError> {
    let solver = SolverSettings::default();
    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (name, ch, expected_shape) in reference_channels() {
        let lmax = 0.999 * max_lambda1_2src(&ch, &solver)?;
        let grid: Vec<f64> = (0..40).map(|i| i as f64 * lmax / 39.0).collect();
        let stab = boundary_2src(&ch, Boundary2Kind::StabilityExact, &grid, &solver)?;
        let thr = boundary_2src(&ch, Boundary2Kind::Throughput, &grid, &solver)?;
        let mut worst = 0.0f64;
        for (a, b) in stab.points.iter().zip(&thr.points) {
            if a.feasible && b.feasible {
                worst = worst.max((a.lambda[1] - b.lambda[1]).abs());
            }
        }
        let shape = classify_region_shape(&thr, SHAPE_TOL);
        if shape != expected_shape {
            failures.push(format!("{name}: shape {shape:?}, expected {expected_shape:?}"));
        }
        if worst > COINCIDENCE_TOL {
            failures.push(format!(
                "{name}: stability/throughput gap {worst:.2e} > {COINCIDENCE_TOL:.0e}"
            ));
        }
        for (kind, b) in [("stability", &stab), ("throughput", &thr)] {
            let meta = vec![
                format!("rab reproduce fig3 ({})", version_string()),
                format!("channel: {name}, boundary: {kind}"),
                format!("shape: {shape:?}, max stability/throughput gap: {worst:.2e}"),
            ];
            let file = format!("fig3_{name}_{kind}.csv");
            write_file(&cli.out, &file, &boundary_csv(b, meta))?;
            outputs.push(file);
        }
        println!("fig3 {name}: shape {shape:?}, coincidence gap {worst:.2e}");
    }
    let m = manifest(cli, "reproduce fig3", None, &solver, outputs);
    write_manifest(&cli.out, "fig3.manifest.json", &m)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Mismatch(failures.join("; ")))
    }
}

fn reproduce_fig4(cli: &Cli) -> Result<(), CliError> {
    let solver = SolverSettings::default();
    let mk = |m: usize| -> Result<Channel, CliError> {
        Ok(Channel::Collision(CollisionChannelNxM::new(
            2,
            m,
            vec![0.7, 0.8],
        )?))
    };
    let lmax = 0.95 * max_lambda1_2src(&mk(15)?, &solver)?;
    let grid: Vec<f64> = (0..20).map(|i| i as f64 * lmax / 19.0).collect();
    let mut outputs = Vec::new();
    let mut bounds = Vec::new();
    for m in [2usize, 5, 15] {
        let b = boundary_2src(&mk(m)?, Boundary2Kind::Throughput, &grid, &solver)?;
        let meta = vec![
            format!("rab reproduce fig4 ({})", version_string()),
            format!("two sources, {m} destinations, q = (0.7, 0.8), throughput boundary"),
        ];
        let file = format!("fig4_m{m}.csv");
        write_file(&cli.out, &file, &boundary_csv(&b, meta))?;
        outputs.push(file);
        bounds.push(b);
    }
    let mut min_gap = f64::INFINITY;
    for i in 0..grid.len() {
        min_gap = min_gap
            .min(bounds[0].points[i].lambda[1] - bounds[1].points[i].lambda[1])
            .min(bounds[1].points[i].lambda[1] - bounds[2].points[i].lambda[1]);
    }
    let report = format!(
        "nesting check: min strict gap {min_gap:.6} (required >= {NESTING_GAP})\n"
    );
    write_file(&cli.out, "fig4_report.txt", &report)?;
    outputs.push("fig4_report.txt".into());
    let m = manifest(cli, "reproduce fig4", None, &solver, outputs);
    write_manifest(&cli.out, "fig4.manifest.json", &m)?;
    println!("fig4: min nesting gap {min_gap:.6}");
    if min_gap >= NESTING_GAP {
        Ok(())
    } else {
        Err(CliError::Mismatch(format!(
            "fig4: nesting gap {min_gap:.6} < {NESTING_GAP}"
        )))
    }
}
