//! The four pipeline stages. Each reads files, writes files, and records a
//! metadata sidecar per output.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sqlink::channel::{sample_transmission, synthesize_records, MeasurementRecord};
use sqlink::density::DensityMatrixJson;
use sqlink::io::{
    read_records, write_bin_statistics, write_contours, write_histogram, write_records,
    write_wigner,
};
use sqlink::mle::{
    mle_solve, parity_diagnostic, truncation_check, MleProblem, ParityWeights, Termination,
    TruncationReport,
};
use sqlink::postselect::{
    bin_statistics, fit_scaling, is_monotone_within_error_bars, pool_bins, select_best_bin,
    transmission_histogram, BinStatistics, FitReport, PooledSqueezing,
};
use sqlink::rng::child_seed;
use sqlink::tomography::{
    build_tomograms, group_by_angle, mirror_tomograms, RangePolicy, Tomogram, TomogramSetJson,
};
use sqlink::wigner::{contour_1e, wigner, GridSpec};
use sqlink::{gaussian_to_fock, DensityMatrix, GaussianDarkPlaneState, Parallelism};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::sidecar::{self, InputDigest, Metadata};

const ANGLE_MATCH: f64 = 1e-9;

pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub par: Parallelism,
}

impl Context {
    fn hash(&self) -> String {
        self.config.hash()
    }

    fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn finish(&self, command: &str, outputs: &[&Path], inputs: &[&Path]) -> CliResult<()> {
        let inputs = inputs
            .iter()
            .map(|p| sidecar::digest(p))
            .collect::<CliResult<Vec<InputDigest>>>()?;
        let meta = Metadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: self.hash(),
            seed: self.config.seed,
            inputs,
        };
        outputs.iter().try_for_each(|o| sidecar::write(o, &meta))
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_records(ctx: &Context, path: &Path) -> CliResult<Vec<MeasurementRecord>> {
    sidecar::check_input(path, &ctx.hash())?;
    let file =
        File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(read_records(BufReader::new(file))?)
}

/// Writes `records.csv`. With `scan`, produces the tomography angle scan at
/// the selected transmission instead of the fading-channel stream.
pub fn simulate(ctx: &Context, scan: bool) -> CliResult<()> {
    let cfg = &ctx.config;
    let state = cfg.state.build()?;
    let mut records = Vec::new();
    if scan {
        let tomo = &cfg.tomography;
        for (i, a) in tomo.angles_deg.iter().enumerate() {
            let angle = state.theta_sq + a.to_radians();
            let seed = child_seed(cfg.seed, i as u64);
            records.extend(synthesize_records(
                &state,
                angle,
                &[tomo.select_t],
                tomo.samples_per_angle,
                seed,
                cfg.simulation.noise,
                ctx.par,
            )?);
        }
    } else {
        let sim = &cfg.simulation;
        for (i, a) in sim.angles_deg.iter().enumerate() {
            let angle = state.theta_sq + a.to_radians();
            let seed = child_seed(cfg.seed, i as u64);
            let ts = sample_transmission(&cfg.channel, sim.draws, seed, ctx.par)?;
            records.extend(synthesize_records(
                &state,
                angle,
                &ts,
                sim.samples_per_t,
                seed,
                sim.noise,
                ctx.par,
            )?);
        }
    }
    let path = ctx.output("records.csv");
    let mut w = create(&path)?;
    write_records(&mut w, &records)?;
    w.flush()?;
    ctx.finish("simulate", &[&path], &[])
}

#[derive(Debug, Serialize)]
struct BestBin {
    #[serde(flatten)]
    stats: BinStatistics,
    #[serde(rename = "stderr_dB")]
    stderr_db: f64,
}

#[derive(Debug, Serialize)]
struct BinReport {
    fit: Option<FitReport>,
    fit_error: Option<String>,
    aggregate: PooledSqueezing,
    best_bin: BestBin,
    #[serde(rename = "enhancement_dB")]
    enhancement_db: f64,
    monotone_within_error_bars: bool,
    retained_bins: usize,
}

/// Writes `bin_statistics.csv`, `transmission_histogram.csv` and `fit.json`.
pub fn bin(ctx: &Context, records_path: &Path) -> CliResult<()> {
    let records = load_records(ctx, records_path)?;
    if let Some(r) = records.iter().find(|r| r.theta != records[0].theta) {
        return Err(CliError::Validation(format!(
            "bin expects one measurement angle, found {} and {} rad",
            records[0].theta, r.theta
        )));
    }
    let protocol = &ctx.config.protocol;
    let stats = bin_statistics(&records, protocol, ctx.par)?;
    let (fit, fit_error) = match fit_scaling(&stats, protocol.free_intercept) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let aggregate = pool_bins(&stats)?;
    let best = select_best_bin(&stats)?;
    let report = BinReport {
        fit,
        fit_error,
        enhancement_db: aggregate.squeezing_db - best.squeezing_db,
        aggregate,
        best_bin: BestBin {
            stderr_db: best.stderr_db(),
            stats: best,
        },
        monotone_within_error_bars: is_monotone_within_error_bars(&stats),
        retained_bins: stats.len(),
    };

    let table = ctx.output("bin_statistics.csv");
    let mut w = create(&table)?;
    write_bin_statistics(&mut w, &stats)?;
    w.flush()?;
    let hist = ctx.output("transmission_histogram.csv");
    let mut w = create(&hist)?;
    write_histogram(
        &mut w,
        &transmission_histogram(&records, protocol.bin_width),
    )?;
    w.flush()?;
    let fit_path = ctx.output("fit.json");
    write_json(&fit_path, &report)?;
    ctx.finish("bin", &[&table, &hist, &fit_path], &[records_path])
}

/// Where `tomo` takes its data from.
pub enum TomoSource<'a> {
    Records(&'a Path),
    Tomograms(&'a Path),
    /// Exact bin probabilities of the configured state after loss.
    Exact,
}

#[derive(Debug, Serialize)]
struct Reference {
    gaussian_purity: f64,
    fidelity: f64,
    reference_dim: usize,
}

#[derive(Debug, Serialize)]
struct TomoReport {
    rho: DensityMatrixJson,
    purity: f64,
    iterations: usize,
    termination: Termination,
    final_log_likelihood: f64,
    log_likelihood_monotone: bool,
    final_dilution: f64,
    n_angles: usize,
    truncation: TruncationReport,
    parity: ParityWeights,
    mixed_parity_fraction: f64,
    reference: Reference,
    log_likelihood_trace: Vec<f64>,
}

/// Analytic state at the smallest cutoff ≥ `dim` that meets the tail bound.
fn analytic(state: &GaussianDarkPlaneState, dim: usize) -> CliResult<DensityMatrix> {
    let mut last = None;
    for d in (dim..=dim + 400).step_by(8) {
        match gaussian_to_fock(state, d) {
            Ok(rho) => return Ok(rho),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("loop ran").into())
}

fn tomograms_from_records(
    ctx: &Context,
    path: &Path,
    state: &GaussianDarkPlaneState,
) -> CliResult<Vec<Tomogram>> {
    let tomo = &ctx.config.tomography;
    let protocol = &ctx.config.protocol;
    let selected_bin = protocol.bin_index(tomo.select_t);
    let records: Vec<_> = load_records(ctx, path)?
        .into_iter()
        .filter(|r| protocol.bin_index(r.dc_sum) == selected_bin)
        .collect();
    let groups = group_by_angle(&records);
    let mut chosen = Vec::with_capacity(tomo.angles_deg.len());
    for a in &tomo.angles_deg {
        let lab = state.theta_sq + a.to_radians();
        match groups.iter().find(|g| (g.angle - lab).abs() <= ANGLE_MATCH) {
            Some(g) => chosen.push(g.clone()),
            None => return Err(sqlink::Error::EmptyAngleGroup { angle_deg: *a }.into()),
        }
    }
    Ok(build_tomograms(
        &chosen,
        state.theta_sq,
        tomo.n_bins,
        RangePolicy::Sigmas(tomo.range_sigmas),
    )?)
}

fn exact_problem(
    ctx: &Context,
    lossy: &GaussianDarkPlaneState,
    par: Parallelism,
) -> CliResult<MleProblem> {
    let tomo = &ctx.config.tomography;
    let source = analytic(lossy, tomo.dim)?;
    let half = tomo.range_sigmas * (lossy.v_sq.max(lossy.v_anti) / 2.0).sqrt();
    let n = tomo.n_bins;
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend((0..=n).map(|i| {
        if i == n {
            half
        } else {
            -half + 2.0 * half * i as f64 / n as f64
        }
    }));
    edges.push(f64::INFINITY);
    let mut angles: Vec<f64> = tomo.angles_deg.iter().map(|a| a.to_radians()).collect();
    let mirrored: Vec<f64> = angles
        .iter()
        .filter(|&&a| a > ANGLE_MATCH && a < FRAC_PI_2 - ANGLE_MATCH)
        .map(|a| PI - a)
        .collect();
    angles.extend(mirrored);
    angles.sort_by(f64::total_cmp);
    Ok(MleProblem::exact(&source, angles, &edges, tomo.dim, par)?)
}

/// Writes `tomograms.json` (data sources only), `rho.json` and `report.json`.
pub fn tomo(ctx: &Context, source: TomoSource<'_>) -> CliResult<()> {
    let cfg = &ctx.config;
    let tomo = &cfg.tomography;
    let state = cfg.state.build()?;
    let lossy = state.apply_loss(tomo.select_t);
    let mut inputs: Vec<&Path> = Vec::new();
    let mut outputs: Vec<PathBuf> = Vec::new();

    let problem = match source {
        TomoSource::Exact => exact_problem(ctx, &lossy, ctx.par)?,
        TomoSource::Records(path) | TomoSource::Tomograms(path) => {
            inputs.push(path);
            let tomograms = if let TomoSource::Records(_) = source {
                tomograms_from_records(ctx, path, &state)?
            } else {
                sidecar::check_input(path, &ctx.hash())?;
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                let set: TomogramSetJson = serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
                set.to_tomograms()?
            };
            let full = mirror_tomograms(&tomograms)?;
            let set_path = ctx.output("tomograms.json");
            write_json(
                &set_path,
                &TomogramSetJson::from_tomograms(&full, state.theta_sq)?,
            )?;
            outputs.push(set_path);
            MleProblem::from_tomograms(&full, tomo.dim, ctx.par)?
        }
    };

    let result = mle_solve(&problem, &tomo.mle())?;
    let rho = &result.rho;
    let reference = analytic(&lossy, tomo.dim)?;
    let parity = parity_diagnostic(rho, tomo.parity_floor);
    let report = TomoReport {
        rho: rho.to_json(),
        purity: rho.purity(),
        iterations: result.iterations,
        termination: result.termination,
        final_log_likelihood: result.final_log_likelihood(),
        log_likelihood_monotone: result.is_monotone(),
        final_dilution: result.final_dilution,
        n_angles: problem.angles().len(),
        truncation: truncation_check(rho, tomo.photon_cut, tomo.truncation_threshold)?,
        mixed_parity_fraction: parity.mixed_fraction(),
        parity,
        reference: Reference {
            gaussian_purity: lossy.purity(),
            fidelity: rho.padded(reference.dim()).fidelity(&reference),
            reference_dim: reference.dim(),
        },
        log_likelihood_trace: result.log_likelihood.clone(),
    };
    let rho_path = ctx.output("rho.json");
    write_json(&rho_path, &rho.to_json())?;
    let report_path = ctx.output("report.json");
    write_json(&report_path, &report)?;
    outputs.push(rho_path);
    outputs.push(report_path);
    let out_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    ctx.finish("tomo", &out_refs, &inputs)?;
    // the best iterate is on disk either way
    result.require_converged()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ContourSummary {
    half_extent_x: f64,
    half_extent_p: f64,
    vertices: usize,
}

#[derive(Debug, Serialize)]
struct WignerSummary {
    grid: GridSpec,
    riemann_sum: f64,
    state: ContourSummary,
    vacuum: ContourSummary,
}

/// Writes `wigner.csv`, `contours.csv` (state and vacuum 1/e level sets) and
/// `contours.json`.
pub fn wigner_cmd(ctx: &Context, rho_path: &Path) -> CliResult<()> {
    sidecar::check_input(rho_path, &ctx.hash())?;
    let text = fs::read_to_string(rho_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", rho_path.display())))?;
    let json: DensityMatrixJson = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", rho_path.display())))?;
    let rho = DensityMatrix::from_json(&json)?;
    let spec = GridSpec::for_state(&rho, ctx.config.wigner.sigmas, ctx.config.wigner.points);
    let grid = wigner(&rho, &spec, ctx.par)?;
    let vacuum = wigner(&DensityMatrix::vacuum(rho.dim()), &spec, ctx.par)?;
    let state_contour = contour_1e(&grid)?;
    let vacuum_contour = contour_1e(&vacuum)?;

    let grid_path = ctx.output("wigner.csv");
    let mut w = create(&grid_path)?;
    write_wigner(&mut w, &grid)?;
    w.flush()?;
    let contour_path = ctx.output("contours.csv");
    let mut w = create(&contour_path)?;
    write_contours(
        &mut w,
        &[("state", &state_contour), ("vacuum", &vacuum_contour)],
    )?;
    w.flush()?;
    let summarize = |c: &sqlink::wigner::Contour| {
        let (x, p) = c.half_extents();
        ContourSummary {
            half_extent_x: x,
            half_extent_p: p,
            vertices: c.points.len(),
        }
    };
    let summary_path = ctx.output("contours.json");
    write_json(
        &summary_path,
        &WignerSummary {
            grid: spec,
            riemann_sum: grid.riemann_sum(),
            state: summarize(&state_contour),
            vacuum: summarize(&vacuum_contour),
        },
    )?;
    ctx.finish(
        "wigner",
        &[&grid_path, &contour_path, &summary_path],
        &[rho_path],
    )
}
