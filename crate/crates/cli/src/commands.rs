use crate::analysis::{
    extremum_lines, gap_groups, heatmap, simulate_links, track_errors, window_sweep, ErrorStats, Scene,
};
use crate::config::{bounding_area, RunConfig};
use crate::error::CliError;
use fresnel_loc::fresnel::{bisector_offset, LinkGeometry};
use fresnel_loc::io::{
    read_calibration, read_estimates, read_trace, write_calibration, write_estimates, write_trace, Environment,
    FormatError, TraceFile,
};
use fresnel_loc::locate::LocationEstimate;
use fresnel_loc::phase::{estimate_offsets, PhaseOffsetMatrix};
use fresnel_loc::pipeline::{localize, LinkInput, Localization};
use fresnel_loc::scenario::standard_walks;
use fresnel_loc::sim::{make_trajectory, MultipathSpec, PathShape, TrajectorySpec};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const WINDOW_SWEEP: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
pub const GAP_GROUPS: [usize; 3] = [1, 15, 29];

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), FormatError>,
{
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(|e: FormatError| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_trace(path: &Path) -> Result<TraceFile, CliError> {
    read_trace(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_calibration(path: &Path) -> Result<PhaseOffsetMatrix, CliError> {
    read_calibration(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_estimates(path: &Path) -> Result<Vec<LocationEstimate>, CliError> {
    read_estimates(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

/// Seeded static environment of link `i`; shared by walk and calibration traces.
pub fn link_environment(cfg: &RunConfig, i: usize) -> Result<MultipathSpec, CliError> {
    let subs = cfg.subcarriers()?;
    Ok(MultipathSpec::random(&subs, cfg.multipath.paths, cfg.seed.wrapping_add(1_000 + i as u64)))
}

/// Writes `link<i>.trace` for the configured walk and, in multipath
/// scenarios, `link<i>.calib.trace` holding a bisector sweep in the same
/// static environment.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let links = cfg.links()?;
    let subs = cfg.subcarriers()?;
    let traj = make_trajectory(&cfg.walk)?;
    if traj.duration() <= 0.0 {
        return Err(CliError::Config("walk has zero duration".into()));
    }
    let env = if cfg.multipath.enabled {
        Some((0..links.len()).map(|i| link_environment(cfg, i)).collect::<Result<Vec<_>, _>>()?)
    } else {
        None
    };
    let kind = if env.is_some() { Environment::Multipath } else { Environment::FreeSpace };
    let series = simulate_links(
        &links,
        &subs,
        &traj,
        &cfg.reflector,
        env.as_deref(),
        |s| cfg.noise(s),
        cfg.seed,
        cfg.sample_rate,
    )?;
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    for (i, s) in series.into_iter().enumerate() {
        let path = out_dir.join(format!("link{i}.trace"));
        let file = TraceFile {
            series: s,
            truth: Some(traj.clone()),
            environment: kind,
            encoding: cfg.encoding.into(),
        };
        write_atomic(&path, |w| write_trace(&file, w))?;
        written.push(path);
    }
    if let Some(env) = &env {
        for (i, link) in links.iter().enumerate() {
            let c = cfg.calibration;
            let sweep = make_trajectory(&TrajectorySpec::new(
                PathShape::PerpendicularBisectorSweep {
                    link: *link,
                    from_offset: c.from_offset,
                    to_offset: c.to_offset,
                },
                c.speed,
            ))?;
            let s = simulate_links(
                std::slice::from_ref(link),
                &subs,
                &sweep,
                &cfg.reflector,
                Some(std::slice::from_ref(&env[i])),
                |s| cfg.noise(s),
                cfg.seed.wrapping_add(500 + i as u64),
                cfg.sample_rate,
            )?
            .remove(0);
            let path = out_dir.join(format!("link{i}.calib.trace"));
            let file = TraceFile {
                series: s,
                truth: Some(sweep),
                environment: Environment::Multipath,
                encoding: cfg.encoding.into(),
            };
            write_atomic(&path, |w| write_trace(&file, w))?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn cmd_calibrate(cfg: &RunConfig, trace: &Path, out: &Path) -> Result<PhaseOffsetMatrix, CliError> {
    let file = load_trace(trace)?;
    let truth = file
        .truth
        .ok_or_else(|| CliError::Data(format!("{} carries no ground-truth trajectory", trace.display())))?;
    let m = estimate_offsets(&file.series, &truth, &cfg.pipeline()?.window)?;
    write_atomic(out, |w| write_calibration(&m, w))?;
    Ok(m)
}

/// Localizes time-aligned traces. Calibration files pair with traces by
/// position; multipath traces must have one unless `uncalibrated` is set.
pub fn cmd_localize(
    cfg: &RunConfig,
    traces: &[PathBuf],
    calibrations: &[PathBuf],
    uncalibrated: bool,
    out: &Path,
) -> Result<Localization, CliError> {
    if traces.len() < 2 {
        return Err(CliError::Config(format!(
            "localization needs at least 2 link traces, got {}",
            traces.len()
        )));
    }
    if !calibrations.is_empty() && calibrations.len() != traces.len() {
        return Err(CliError::Config(format!(
            "{} calibration files for {} traces",
            calibrations.len(),
            traces.len()
        )));
    }
    let files = traces.iter().map(|p| load_trace(p)).collect::<Result<Vec<_>, _>>()?;
    for (f, p) in files.iter().zip(traces) {
        if f.environment == Environment::Multipath && calibrations.is_empty() && !uncalibrated {
            return Err(CliError::Config(format!(
                "{} is a multipath trace; pass a calibration file per trace",
                p.display()
            )));
        }
    }
    let matrices = calibrations.iter().map(|p| load_calibration(p)).collect::<Result<Vec<_>, _>>()?;
    let links: Vec<LinkGeometry> = files.iter().map(|f| *f.series.link()).collect();
    let area = match cfg.area {
        Some(a) => a,
        None => bounding_area(&links)?,
    };
    let inputs: Vec<LinkInput<'_>> = files
        .iter()
        .enumerate()
        .map(|(i, f)| LinkInput {
            series: &f.series,
            calibration: matrices.get(i),
        })
        .collect();
    let result = localize(&inputs, &area, &cfg.pipeline()?)?;
    write_atomic(out, |w| write_estimates(&result.estimates, w))?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall: ErrorStats,
    pub per_path: Vec<(String, ErrorStats)>,
}

impl EvalReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("# localization error, 0.20 m body radius\n");
        s.push_str("path\tcount\tmedian_m\tmean_m\tp90_m\n");
        let row = |s: &mut String, name: &str, st: &ErrorStats| {
            let _ = writeln!(
                s,
                "{name}\t{}\t{:.4}\t{:.4}\t{:.4}",
                st.count,
                st.median,
                st.mean,
                st.quantile(0.9)
            );
        };
        for (name, st) in &self.per_path {
            row(&mut s, name, st);
        }
        row(&mut s, "all", &self.overall);
        s.push_str("\n# cdf\nfraction\terror_m\n");
        for (p, e) in &self.overall.cdf {
            let _ = writeln!(s, "{p:.2}\t{e:.4}");
        }
        s
    }
}

/// Scores estimate files against the ground truth carried by trace files,
/// pairing them by position.
pub fn cmd_evaluate(estimates: &[PathBuf], truths: &[PathBuf], out: Option<&Path>) -> Result<EvalReport, CliError> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(CliError::Config(format!(
            "need matching estimate and truth files, got {} and {}",
            estimates.len(),
            truths.len()
        )));
    }
    let mut all = Vec::new();
    let mut per_path = Vec::new();
    for (ep, tp) in estimates.iter().zip(truths) {
        let est = load_estimates(ep)?;
        let truth = load_trace(tp)?
            .truth
            .ok_or_else(|| CliError::Data(format!("{} carries no ground truth", tp.display())))?;
        let tol = 1e-6;
        if let Some(e) = est
            .iter()
            .find(|e| e.time < truth.start_time() - tol || e.time > truth.end_time() + tol)
        {
            return Err(CliError::Data(format!(
                "estimate at t = {} s lies outside the ground truth span [{}, {}] s",
                e.time,
                truth.start_time(),
                truth.end_time()
            )));
        }
        let errors = track_errors(&est, &truth);
        let stats = ErrorStats::new(&errors)
            .ok_or_else(|| CliError::Data(format!("{} holds no estimates", ep.display())))?;
        per_path.push((ep.display().to_string(), stats));
        all.extend(errors);
    }
    let report = EvalReport {
        overall: ErrorStats::new(&all).expect("non-empty"),
        per_path,
    };
    if let Some(out) = out {
        write_text(out, &report.render())?;
    }
    Ok(report)
}

/// Writes `heatmap.tsv`, `extrema.tsv`, `window_sweep.tsv` and
/// `gap_groups.tsv` for the configured channel and deployment.
pub fn cmd_plotdata(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let links = cfg.links()?;
    let subs = cfg.subcarriers()?;
    let area = cfg.sensing_area()?;
    let pipeline = cfg.pipeline()?;
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    let link = links[0];

    // path lengths d0 + 0.5 m to d0 + 4.8 m along the first link's bisector
    let near = bisector_offset(&link, link.d0() + 0.5)?;
    let far = bisector_offset(&link, link.d0() + 4.8)?;
    let map = heatmap(&link, &subs, &cfg.reflector, near, far, 4.0 * cfg.sample_rate)?;
    let mut t = String::from("d_hat_m");
    for f in &map.freqs {
        let _ = write!(t, "\t{f}");
    }
    t.push('\n');
    for (i, d) in map.d_hat.iter().enumerate().step_by(4) {
        let _ = write!(t, "{d:.6}");
        for row in &map.amplitude {
            let _ = write!(t, "\t{:.6}", row[i]);
        }
        t.push('\n');
    }
    let path = out_dir.join("heatmap.tsv");
    write_text(&path, &t)?;
    written.push(path);

    let mut t = String::from("line\tfirst_d_hat_m\tlast_d_hat_m\tslope_m_per_mhz\tr_squared\n");
    for (i, l) in extremum_lines(&map).iter().enumerate() {
        let _ = writeln!(
            t,
            "{i}\t{:.6}\t{:.6}\t{:.6e}\t{:.8}",
            l.d_hat[0],
            l.d_hat[l.d_hat.len() - 1],
            l.slope * 1e6,
            l.r_squared
        );
    }
    let path = out_dir.join("extrema.tsv");
    write_text(&path, &t)?;
    written.push(path);

    let scene = Scene {
        links: links.clone(),
        area,
        subcarriers: subs.clone(),
        reflector: cfg.reflector,
        sample_rate: cfg.sample_rate,
        walks: standard_walks(&area)
            .into_iter()
            .map(|(_, shape)| TrajectorySpec::new(shape, cfg.walk.speed))
            .collect(),
        snr_db: cfg.noise.snr_db,
        seed: cfg.seed,
    };
    let mut t = String::from("window_s\twindow_samples\testimates\tgap_fraction\tmedian_error_m\tmedian_distance_m\n");
    let cell = |v: Option<f64>| v.map_or("nan".to_string(), |m| format!("{m:.4}"));
    for p in window_sweep(&scene, &pipeline, &WINDOW_SWEEP)? {
        let _ = writeln!(
            t,
            "{}\t{}\t{}\t{:.4}\t{}\t{}",
            p.seconds,
            p.samples,
            p.estimates,
            p.gap_fraction,
            cell(p.median_error),
            cell(p.median_distance)
        );
    }
    let path = out_dir.join("window_sweep.tsv");
    write_text(&path, &t)?;
    written.push(path);

    let sweep = make_trajectory(&TrajectorySpec::new(
        PathShape::PerpendicularBisectorSweep {
            link,
            from_offset: near,
            to_offset: far,
        },
        cfg.walk.speed,
    ))?;
    let s = simulate_links(
        std::slice::from_ref(&link),
        &subs,
        &sweep,
        &cfg.reflector,
        None,
        |s| cfg.noise(s),
        cfg.seed,
        cfg.sample_rate,
    )?
    .remove(0);
    let gaps: Vec<usize> = GAP_GROUPS.iter().copied().filter(|g| *g < subs.count()).collect();
    let report = gap_groups(&s, &sweep, None, &pipeline, &gaps)?;
    let mut t = String::from("estimator\tmedian_error_m\n");
    let _ = writeln!(t, "full\t{:.4}", report.full_median);
    for (g, m) in &report.groups {
        let _ = writeln!(t, "gap_{g}\t{m:.4}");
    }
    let path = out_dir.join("gap_groups.tsv");
    write_text(&path, &t)?;
    written.push(path);
    Ok(written)
}
