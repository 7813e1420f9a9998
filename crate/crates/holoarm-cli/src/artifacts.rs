//! Deterministic artifact emission: fixed-format numbers, CSV files, SVG
//! plots, policy checkpoints and the experiment manifest.

use std::fs;
use std::path::Path;

use holoarm_core::rl::{Activation, GaussianPolicy, Mlp, OBS_DIM};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Formats with 9 significant digits in plain decimal notation. Identical
/// inputs produce identical bytes, which is what makes CSV byte-determinism
/// checkable.
pub fn sig9(value: f64) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    if value == 0.0 {
        return "0.000000000".to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes a CSV with the given header line and pre-formatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut text = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Writes the experiment manifest: everything needed to re-run, plus a hash
/// of the fully-resolved config the run actually used.
pub fn write_manifest(
    out_dir: &Path,
    subcommand: &str,
    detail: &str,
    seed: u64,
    resolved_config: &str,
) -> Result<(), CliError> {
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = format!(
        "artifact_version 1\nsubcommand {subcommand}\ndetail {detail}\nseed {seed}\n\
         config_sha256 {}\nout {}\ncreated_unix {created}\n",
        sha256_hex(resolved_config.as_bytes()),
        out_dir.display(),
    );
    write_text(&out_dir.join("manifest.txt"), &manifest)?;
    write_text(&out_dir.join("resolved_config.cfg"), resolved_config)
}

// ---------------------------------------------------------------------------
// Policy checkpoints.
// ---------------------------------------------------------------------------

/// Serializes a policy as text: human-readable structure, bit-exact
/// parameters (hex-encoded IEEE-754 doubles).
pub fn checkpoint_to_string(policy: &GaussianPolicy) -> String {
    let sizes = policy.net.sizes();
    let hidden: Vec<String> = sizes[1..sizes.len() - 1].iter().map(|s| s.to_string()).collect();
    let mut text = format!(
        "holoarm-policy v1\nobs {}\nhidden {}\nlog_std {}\n",
        sizes[0],
        hidden.join(" "),
        policy.log_std.len(),
    );
    for v in &policy.log_std {
        text.push_str(&format!("{:016x}\n", v.to_bits()));
    }
    let params = policy.net.params_flat();
    text.push_str(&format!("params {}\n", params.len()));
    for v in &params {
        text.push_str(&format!("{:016x}\n", v.to_bits()));
    }
    text
}

pub fn save_checkpoint(path: &Path, policy: &GaussianPolicy) -> Result<(), CliError> {
    write_text(path, &checkpoint_to_string(policy))
}

fn parse_bits(line: &str, what: &str) -> Result<f64, CliError> {
    u64::from_str_radix(line.trim(), 16)
        .map(f64::from_bits)
        .map_err(|_| CliError::Contract(format!("checkpoint: invalid {what} value '{line}'")))
}

pub fn load_checkpoint(path: &Path) -> Result<GaussianPolicy, CliError> {
    let text = read_text(path)?;
    parse_checkpoint(&text)
}

pub fn parse_checkpoint(text: &str) -> Result<GaussianPolicy, CliError> {
    let bad = |msg: &str| CliError::Contract(format!("checkpoint: {msg}"));
    let mut lines = text.lines();
    if lines.next() != Some("holoarm-policy v1") {
        return Err(bad("missing 'holoarm-policy v1' header"));
    }
    let field = |line: Option<&str>, name: &str| -> Result<String, CliError> {
        let line = line.ok_or_else(|| bad(&format!("missing {name} line")))?;
        line.strip_prefix(name)
            .map(|rest| rest.trim().to_string())
            .ok_or_else(|| bad(&format!("expected '{name} ...', got '{line}'")))
    };
    let obs: usize = field(lines.next(), "obs")?
        .parse()
        .map_err(|_| bad("invalid obs dimension"))?;
    if obs != OBS_DIM {
        return Err(bad(&format!("observation dimension {obs} does not match {OBS_DIM}")));
    }
    let hidden: Vec<usize> = field(lines.next(), "hidden")?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad("invalid hidden size")))
        .collect::<Result<_, _>>()?;
    let n_std: usize = field(lines.next(), "log_std")?
        .parse()
        .map_err(|_| bad("invalid log_std count"))?;
    let mut log_std = Vec::with_capacity(n_std);
    for _ in 0..n_std {
        log_std.push(parse_bits(lines.next().ok_or_else(|| bad("truncated log_std"))?, "log_std")?);
    }
    let n_params: usize = field(lines.next(), "params")?
        .parse()
        .map_err(|_| bad("invalid parameter count"))?;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        params.push(parse_bits(lines.next().ok_or_else(|| bad("truncated params"))?, "param")?);
    }

    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(obs);
    sizes.extend_from_slice(&hidden);
    sizes.push(4);
    let mut net = Mlp::zeros(&sizes, Activation::Sigmoid);
    if params.len() != net.param_count() {
        return Err(bad(&format!(
            "{} parameters do not fit a {:?} network ({} expected)",
            params.len(),
            sizes,
            net.param_count(),
        )));
    }
    net.set_params_flat(&params);
    Ok(GaussianPolicy { net, log_std })
}

// ---------------------------------------------------------------------------
// SVG plots.
// ---------------------------------------------------------------------------

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 48.0;

/// One labelled line on a plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

pub struct PlotSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: &'a [Series<'a>],
    /// Optional dashed horizontal marker (e.g. a threshold).
    pub threshold: Option<(f64, &'a str)>,
}

fn axis_bounds(values: impl Iterator<Item = f64>, extra: Option<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.chain(extra) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(value: f64) -> String {
    let a = value.abs();
    let text = if a != 0.0 && (a >= 1e4 || a < 1e-3) {
        format!("{value:.2e}")
    } else {
        format!("{value:.3}")
    };
    text
}

/// Renders a deterministic line plot. Fails on empty input so a silent blank
/// plot can never mask a missing series.
pub fn render_plot(spec: &PlotSpec) -> Result<String, CliError> {
    if spec.series.is_empty() || spec.series.iter().all(|s| s.points.is_empty()) {
        return Err(CliError::Contract(format!("plot '{}': no data to draw", spec.title)));
    }
    let (x0, x1) = axis_bounds(
        spec.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        None,
    );
    let (y0, y1) = axis_bounds(
        spec.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
        spec.threshold.map(|t| t.0),
    );
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        escape(spec.title),
    ));

    // Grid and tick labels.
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let gx = px(fx);
        let gy = py(fy);
        svg.push_str(&format!(
            "<line x1=\"{gx:.2}\" y1=\"{MARGIN_T}\" x2=\"{gx:.2}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            HEIGHT - MARGIN_B,
        ));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{gy:.2}\" x2=\"{:.1}\" y2=\"{gy:.2}\" stroke=\"#dddddd\"/>\n",
            WIDTH - MARGIN_R,
        ));
        svg.push_str(&format!(
            "<text x=\"{gx:.2}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_B + 16.0,
            tick_label(fx),
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            gy + 4.0,
            tick_label(fy),
        ));
    }
    // Axes.
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(spec.x_label),
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(spec.y_label),
    ));

    if let Some((level, label)) = spec.threshold {
        let gy = py(level);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{gy:.2}\" x2=\"{:.1}\" y2=\"{gy:.2}\" \
             stroke=\"#888888\" stroke-dasharray=\"6 4\"/>\n",
            WIDTH - MARGIN_R,
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#555555\">{}</text>\n",
            WIDTH - MARGIN_R - 4.0,
            gy - 5.0,
            escape(label),
        ));
    }

    for (i, series) in spec.series.iter().enumerate() {
        if series.points.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::with_capacity(series.points.len() * 14);
        for (j, (x, y)) in series.points.iter().enumerate() {
            d.push_str(if j == 0 { "M" } else { "L" });
            d.push_str(&format!("{:.2} {:.2}", px(*x), py(*y)));
        }
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{}</text>\n",
            MARGIN_L + 10.0,
            MARGIN_T + 16.0 + 16.0 * i as f64,
            escape(series.label),
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn save_plot(path: &Path, spec: &PlotSpec) -> Result<(), CliError> {
    let svg = render_plot(spec)?;
    write_text(path, &svg)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formats_nine_significant_digits() {
        assert_eq!(sig9(0.0), "0.000000000");
        assert_eq!(sig9(-0.0), "0.000000000");
        assert_eq!(sig9(1.0), "1.00000000");
        assert_eq!(sig9(-2.378925), "-2.37892500");
        assert_eq!(sig9(123.456789123), "123.456789");
        assert_eq!(sig9(0.000123456789), "0.000123456789");
        assert_eq!(sig9(987654321.123), "987654321");
    }

    #[test]
    fn sig9_is_plain_decimal() {
        for v in [1e-6, 3.14159, 42.0, 1e6, -0.52] {
            let s = sig9(v);
            assert!(!s.contains('e') && !s.contains('E'), "{s}");
            let round_trip: f64 = s.parse().unwrap();
            assert!((round_trip - v).abs() <= v.abs() * 1e-8 + 1e-15);
        }
    }

    fn synthetic_policy(hidden: &[usize]) -> GaussianPolicy {
        let mut sizes = vec![OBS_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(4);
        let mut net = Mlp::zeros(&sizes, Activation::Sigmoid);
        // Irregular but deterministic parameter pattern.
        let params: Vec<f64> = (0..net.param_count())
            .map(|i| ((i as f64 * 0.7129).sin() - 0.3) / 3.0)
            .collect();
        net.set_params_flat(&params);
        GaussianPolicy {
            net,
            log_std: vec![-1.2, -0.7, -2.0, -1.55],
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let policy = synthetic_policy(&[8, 6]);
        let text = checkpoint_to_string(&policy);
        let loaded = parse_checkpoint(&text).unwrap();
        assert_eq!(policy, loaded);
        // Serialization itself is deterministic.
        assert_eq!(text, checkpoint_to_string(&loaded));
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let policy = synthetic_policy(&[4]);
        let good = checkpoint_to_string(&policy);
        assert!(parse_checkpoint(&good.replace("holoarm-policy v1", "other")).is_err());
        // Dropping the last parameter line truncates the stream.
        let truncated: Vec<&str> = good.lines().collect();
        let text = truncated[..truncated.len() - 1].join("\n");
        assert!(parse_checkpoint(&text).is_err());
    }

    #[test]
    fn plots_are_deterministic_and_reject_empty_input() {
        let points: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, (i as f64 * 0.3).sin())).collect();
        let spec = PlotSpec {
            title: "angle vs time",
            x_label: "t [s]",
            y_label: "angle [deg]",
            series: &[Series { label: "lateral", points: &points }],
            threshold: Some((1.0, "1 deg")),
        };
        let a = render_plot(&spec).unwrap();
        let b = render_plot(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg "));
        assert!(a.contains("angle vs time"));
        assert!(a.contains("stroke-dasharray"));

        let empty = PlotSpec {
            title: "empty",
            x_label: "x",
            y_label: "y",
            series: &[],
            threshold: None,
        };
        assert!(render_plot(&empty).is_err());
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
