//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The plain functions do the work and are usable natively; the exported
//! wrappers only convert errors into JS exceptions.

use fresnel_loc::fresnel::{
    catch_up_zone, reflected_path_length, zone_crossing_point, LinkGeometry, Point2D, SubcarrierSet, SPEED_OF_LIGHT,
};
use fresnel_loc::locate::{localization_error, BODY_RADIUS};
use fresnel_loc::pipeline::{localize, LinkInput, PipelineConfig};
use fresnel_loc::scenario::{standard_walks, Deployment};
use fresnel_loc::sim::{
    dynamic_amplitude, make_trajectory, simulate_free_space, NoiseSpec, ReflectorSpec, TrajectorySpec,
};
use std::f64::consts::PI;
use wasm_bindgen::prelude::*;

const SAMPLE_RATE: f64 = 500.0;

fn horizontal_link(length: f64) -> Result<LinkGeometry, String> {
    LinkGeometry::new(Point2D::new(0.0, 0.0), Point2D::new(length, 0.0)).map_err(|e| e.to_string())
}

/// Free-space amplitude of subcarrier `k` for a reflector at each cell of a
/// `cells x cells` grid. The link runs from (0, 0) to (`length`, 0); the grid
/// spans x in [-1, length + 1] and y in [0, length + 2], row-major from the
/// top.
pub fn amplitude_grid(length: f64, k: usize, cells: usize) -> Result<Vec<f32>, String> {
    let link = horizontal_link(length)?;
    let subs = SubcarrierSet::wifi_40mhz();
    if k >= subs.count() {
        return Err(format!("subcarrier {k} out of range 0..{}", subs.count()));
    }
    if !(2..=1024).contains(&cells) {
        return Err(format!("grid of {cells} cells"));
    }
    let refl = ReflectorSpec::default();
    let wavenumber = 2.0 * PI / subs.wavelength(k);
    let (w, h) = (length + 2.0, length + 2.0);
    let step = 1.0 / (cells - 1) as f64;
    let mut out = Vec::with_capacity(cells * cells);
    for row in 0..cells {
        let y = h * (1.0 - row as f64 * step);
        for col in 0..cells {
            let p = Point2D::new(-1.0 + w * col as f64 * step, y);
            let d_hat = reflected_path_length(&p, &link);
            let a = dynamic_amplitude(d_hat, &link, &refl).map_err(|e| e.to_string())?;
            let phi = wavenumber * (d_hat - link.d0());
            out.push((1.0 + a * a + 2.0 * a * phi.cos()).max(0.0).sqrt() as f32);
        }
    }
    Ok(out)
}

/// Catch-up zone pair for `f_a < f_b` and where the lower frequency's zone
/// boundary crosses the bisector of a link of `length` meters:
/// `[zone_a, zone_b, offset_from_los]`.
pub fn catch_up_point(f_a: f64, f_b: f64, length: f64) -> Result<Vec<f64>, String> {
    let c = catch_up_zone(f_a, f_b).map_err(|e| e.to_string())?;
    let link = horizontal_link(length)?;
    let p = zone_crossing_point(&link, c.zone_of_lower_freq, SPEED_OF_LIGHT / f_a).map_err(|e| e.to_string())?;
    Ok(vec![c.zone_of_lower_freq as f64, c.zone_of_higher_freq as f64, p.y.abs()])
}

/// Simulates one of the standard walks through a `side`-meter square with
/// receivers on three corners, localizes it, and returns rows of
/// `[t, true_x, true_y, est_x, est_y, error]`.
pub fn track(side: f64, walk: usize, speed: f64, snr_db: Option<f64>, seed: u64) -> Result<Vec<f64>, String> {
    let dep = Deployment::corners(side).map_err(|e| e.to_string())?;
    let walks = standard_walks(&dep.area);
    let (_, shape) = walks
        .get(walk)
        .ok_or_else(|| format!("walk {walk} out of range 0..{}", walks.len()))?;
    let traj = make_trajectory(&TrajectorySpec::new(shape.clone(), speed).with_duration(6.0))
        .map_err(|e| e.to_string())?;
    let subs = SubcarrierSet::wifi_40mhz();
    let refl = ReflectorSpec::default();
    let series = dep
        .links
        .iter()
        .enumerate()
        .map(|(i, link)| {
            let noise = match snr_db {
                Some(s) => NoiseSpec::from_snr_db(s, &refl, seed + i as u64),
                None => NoiseSpec::noiseless(),
            };
            simulate_free_space(link, &subs, &traj, &refl, &noise, SAMPLE_RATE)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let inputs: Vec<LinkInput<'_>> = series.iter().map(|s| LinkInput { series: s, calibration: None }).collect();
    let loc = localize(&inputs, &dep.area, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(loc.estimates.len() * 6);
    for e in &loc.estimates {
        let truth = traj.position_at(e.time);
        out.extend([
            e.time,
            truth.x,
            truth.y,
            e.position.x,
            e.position.y,
            localization_error(&e.position, &truth, BODY_RADIUS),
        ]);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = amplitudeGrid)]
pub fn amplitude_grid_js(length: f64, k: usize, cells: usize) -> Result<Vec<f32>, JsError> {
    amplitude_grid(length, k, cells).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = catchUp)]
pub fn catch_up_js(f_a: f64, f_b: f64, length: f64) -> Result<Vec<f64>, JsError> {
    catch_up_point(f_a, f_b, length).map_err(|e| JsError::new(&e))
}

/// A negative `snr_db` means noiseless.
#[wasm_bindgen(js_name = trackWalk)]
pub fn track_js(side: f64, walk: usize, speed: f64, snr_db: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let snr = (snr_db >= 0.0).then_some(snr_db);
    track(side, walk, speed, snr, seed).map_err(|e| JsError::new(&e))
}
