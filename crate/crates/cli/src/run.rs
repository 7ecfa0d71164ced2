//! Pipeline stages. Each stage writes its own files and records its status in
//! the manifest before the next one starts.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use skewlab::disintegration::{
    accumulate_fibers, covering_decay, covering_functional, detect_atoms, symmetry_floor_check, AtomReport,
    FiberHistogram,
};
use skewlab::disintegration::atoms::MIN_ATOM_SAMPLES;
use skewlab::fibration::{equivariance_error, io as fib_io, solve_fibration, FibrationModel};
use skewlab::kifer::{
    atomic_impossibility_check, density_exponent, estimate_stationary, total_variation, ulam_stationary,
    ImpossibilityReport,
};
use skewlab::lyapunov::{center_exponent, spectrum_with_center, Direction};
use skewlab::rng::{derive_seed, stream};
use skewlab::{SkewSystem, TorusPoint3};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::manifest::{OutputDir, RunManifest};

/// Shortest round-trip scientific notation, identical on every run.
fn num(x: f64) -> String {
    format!("{x:e}")
}

fn stage<T>(out: &mut OutputDir, name: &str, body: impl FnOnce(&mut OutputDir) -> Result<T, CliError>) -> Result<T, CliError> {
    out.begin(name)?;
    let result = body(out);
    out.finish(name, result.as_ref().err())?;
    result
}

fn module(stage: &str) -> impl Fn(skewlab::Error) -> CliError + '_ {
    move |e| CliError::stage(stage, e)
}

/// Validates the config, runs the stages of its kind and returns the final manifest.
///
/// Outputs of stages that completed stay on disk and in the manifest when a
/// later stage fails.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest, CliError> {
    config.validate()?;
    let mut out = OutputDir::create(&config.output_dir, RunManifest::new(config))?;
    let result = run_stages(config, &mut out);
    out.close()?;
    result.map(|_| out.manifest)
}

fn run_stages(config: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    if config.kind == ExperimentKind::Kifer {
        return stage(out, "kifer", |o| kifer_stage(config, o));
    }
    let s = config.skew_system()?;
    match config.kind {
        ExperimentKind::Fibration => stage(out, "fibration", |o| fibration_stage(config, &s, o)).map(|_| ()),
        ExperimentKind::Spectrum => stage(out, "spectrum", |o| spectrum_stage(config, &s, None, o)),
        ExperimentKind::Disintegrate => stage(out, "disintegrate", |o| disintegration_stage(config, &s, None, o)),
        ExperimentKind::Covering => stage(out, "covering", |o| covering_stage(config, &s, None, o)),
        ExperimentKind::FullPipeline => {
            let model = match stage(out, "fibration", |o| fibration_stage(config, &s, o)) {
                Ok(m) => Some(m),
                Err(CliError::Stage { .. }) if !config.fibration.required => {
                    eprintln!("[fibration] continuing without a model; leaf coordinates fall back to heights");
                    None
                }
                Err(e) => return Err(e),
            };
            let m = model.as_ref();
            stage(out, "spectrum", |o| spectrum_stage(config, &s, m, o))?;
            stage(out, "disintegrate", |o| disintegration_stage(config, &s, m, o))?;
            stage(out, "covering", |o| covering_stage(config, &s, m, o))
        }
        ExperimentKind::Kifer => unreachable!(),
    }
}

#[derive(Serialize)]
struct FibrationSummary {
    base_resolution: usize,
    fiber_resolution: usize,
    iterations: usize,
    residual: f64,
    change: f64,
    max_displacement: f64,
    check_points: usize,
    equivariance_sup: f64,
}

fn history_csv(history: &[f64]) -> String {
    let mut s = String::from("iteration,witness\n");
    for (i, w) in history.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, num(*w));
    }
    s
}

fn fibration_stage(config: &ExperimentConfig, s: &SkewSystem, out: &mut OutputDir) -> Result<FibrationModel, CliError> {
    let f = &config.fibration;
    let model = match solve_fibration(s, f.n_b, f.n_f, f.tol, f.max_iter) {
        Ok(m) => m,
        Err(e) => {
            if let skewlab::Error::NoConvergence { history, .. } = &e {
                out.write("fibration_history.csv", history_csv(history).as_bytes())?;
            }
            return Err(CliError::stage("fibration", e));
        }
    };
    out.write("fibration_history.csv", history_csv(model.history()).as_bytes())?;
    let mut bin = Vec::new();
    fib_io::write_binary(&model, &mut bin).expect("writing to memory");
    out.write("fibration.bin", &bin)?;
    let mut csv = Vec::new();
    fib_io::write_csv(&model, &mut csv).expect("writing to memory");
    out.write("fibration.csv", &csv)?;

    let mut rng = stream(derive_seed(config.seed, "fibration-check"), "points");
    let points: Vec<TorusPoint3> = (0..f.check_points)
        .map(|_| {
            use rand::Rng;
            let (i, j) = (rng.gen_range(0..f.n_b), rng.gen_range(0..f.n_b));
            model.leaf_point(i, j, rng.gen())
        })
        .collect();
    let sup = points
        .par_iter()
        .map(|&p| equivariance_error(&model, p))
        .collect::<skewlab::Result<Vec<f64>>>()
        .map_err(module("fibration"))?
        .into_iter()
        .fold(0.0, f64::max);
    let summary = FibrationSummary {
        base_resolution: f.n_b,
        fiber_resolution: f.n_f,
        iterations: model.history().len(),
        residual: model.residual(),
        change: model.change(),
        max_displacement: model.max_displacement(),
        check_points: f.check_points,
        equivariance_sup: sup,
    };
    out.write_json("fibration.json", &summary)?;
    out.metric("fibration_residual", model.residual());
    out.metric("equivariance_sup", sup);
    Ok(model)
}

#[derive(Serialize)]
struct SpectrumSummary {
    n: usize,
    start: [f64; 3],
    exponents: [f64; 3],
    sum: f64,
    center_exponent: Option<f64>,
    center_exponent_inverse: f64,
    last_history_change: Option<f64>,
    used_model: bool,
}

fn spectrum_stage(
    config: &ExperimentConfig,
    s: &SkewSystem,
    m: Option<&FibrationModel>,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let start = config.spectrum.start.unwrap_or_else(|| {
        use rand::Rng;
        let mut rng = stream(derive_seed(config.seed, "spectrum-start"), "point");
        [rng.gen(), rng.gen(), rng.gen()]
    });
    let p0 = TorusPoint3::new(start[0], start[1], start[2]);
    let n = config.spectrum.n;
    let est = spectrum_with_center(s, m, p0, n, derive_seed(config.seed, "spectrum-frame")).map_err(module("spectrum"))?;
    let inverse = center_exponent(s, m, p0, n, Direction::Backward).map_err(module("spectrum"))?;
    out.write("spectrum_history.csv", est.history_csv().as_bytes())?;
    let summary = SpectrumSummary {
        n,
        start,
        exponents: est.exponents,
        sum: est.sum(),
        center_exponent: est.center_exponent,
        center_exponent_inverse: inverse,
        last_history_change: est.last_history_change(),
        used_model: m.is_some(),
    };
    out.write_json("spectrum.json", &summary)?;
    for (i, l) in est.exponents.iter().enumerate() {
        out.metric(&format!("lambda_{}", i + 1), *l);
    }
    out.metric("lambda_sum", est.sum());
    if let Some(c) = est.center_exponent {
        out.metric("lambda_c", c);
    }
    out.metric("lambda_c_inverse", inverse);
    Ok(())
}

/// Outcome of atom detection on one fiber.
struct FiberVerdict {
    report: Option<AtomReport>,
    outcome: String,
    symmetric: bool,
    m_hat: Option<f64>,
}

fn well_populated(h: &FiberHistogram) -> bool {
    !h.sparse && h.samples.len() >= MIN_ATOM_SAMPLES
}

#[derive(Serialize)]
struct DisintegrationSummary {
    direction: Direction,
    delta: f64,
    fibers: usize,
    well_populated: usize,
    symmetry_floor: u32,
    k_mode: usize,
    k_mode_share: f64,
    k_equals_floor_fraction: f64,
    pass_fraction: f64,
    symmetric_fraction: f64,
    no_concentration: usize,
    max_cluster_weight_mean: f64,
    max_cluster_weight_cv: f64,
    max_bin_mass_median: f64,
    m_hat_median: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn disintegration_stage(
    config: &ExperimentConfig,
    s: &SkewSystem,
    m: Option<&FibrationModel>,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let ens = config.ensemble();
    let direction = config.disintegration.direction;
    let fibers = accumulate_fibers(s, m, &ens, direction).map_err(module("disintegrate"))?;
    let k = s.k();
    let slack = config.disintegration.symmetry_slack;
    let verdicts: Vec<FiberVerdict> = fibers
        .par_iter()
        .map(|h| {
            let m_hat = covering_functional(&h.samples, config.covering.n_arcs).ok();
            match detect_atoms(&h.samples, ens.delta, k as usize) {
                Ok(rep) => FiberVerdict {
                    symmetric: symmetry_floor_check(k, &rep, &h.samples, slack),
                    outcome: if rep.pass { "pass".into() } else { "fail".into() },
                    report: Some(rep),
                    m_hat,
                },
                Err(e) => FiberVerdict {
                    report: None,
                    outcome: match e {
                        skewlab::Error::NoConcentration { .. } => "no-concentration".into(),
                        skewlab::Error::InsufficientSamples { .. } => "insufficient-samples".into(),
                        other => other.to_string(),
                    },
                    symmetric: false,
                    m_hat,
                },
            }
        })
        .collect();

    let mut csv = String::from(
        "fiber,cell_i,cell_j,base_x,base_y,samples,sparse,outcome,k_detected,weights,max_weight_deviation,clustered_mass,symmetric,max_bin_mass,max_cluster_weight,m_hat\n",
    );
    let mut hist = String::from("fiber,bin,count\n");
    for (f, (h, v)) in fibers.iter().zip(&verdicts).enumerate() {
        let (kd, weights, dev, mass) = match &v.report {
            Some(r) => (
                r.k_detected.to_string(),
                r.weight_vector.iter().map(|w| num(*w)).collect::<Vec<_>>().join(";"),
                num(r.max_weight_deviation),
                num(r.clustered_mass),
            ),
            None => ("0".into(), String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            csv,
            "{f},{},{},{},{},{},{},{},{kd},{weights},{dev},{mass},{},{},{},{}",
            h.base_cell.0,
            h.base_cell.1,
            num(h.base_point[0]),
            num(h.base_point[1]),
            h.samples.len(),
            h.sparse,
            v.outcome,
            v.symmetric,
            num(h.max_bin_mass()),
            num(h.max_cluster_weight()),
            v.m_hat.map(num).unwrap_or_default(),
        );
        for (b, c) in h.histogram.iter().enumerate() {
            let _ = writeln!(hist, "{f},{b},{c}");
        }
    }
    out.write("fibers.csv", csv.as_bytes())?;
    out.write("histograms.csv", hist.as_bytes())?;

    let populated: Vec<usize> = (0..fibers.len()).filter(|&i| well_populated(&fibers[i])).collect();
    let count = populated.len().max(1) as f64;
    let ks: Vec<usize> = populated
        .iter()
        .map(|&i| verdicts[i].report.as_ref().map_or(0, |r| r.k_detected))
        .collect();
    let mut tally = std::collections::BTreeMap::new();
    for &kd in &ks {
        *tally.entry(kd).or_insert(0usize) += 1;
    }
    let (k_mode, k_mode_count) = tally
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(k, c)| (*k, *c))
        .unwrap_or((0, 0));
    let d_hat: Vec<f64> = populated.iter().map(|&i| fibers[i].max_cluster_weight()).collect();
    let d_mean = d_hat.iter().sum::<f64>() / count;
    let d_sd = (d_hat.iter().map(|d| (d - d_mean).powi(2)).sum::<f64>() / count).sqrt();
    let summary = DisintegrationSummary {
        direction,
        delta: ens.delta,
        fibers: fibers.len(),
        well_populated: populated.len(),
        symmetry_floor: k,
        k_mode,
        k_mode_share: k_mode_count as f64 / count,
        k_equals_floor_fraction: ks.iter().filter(|&&kd| kd == k as usize).count() as f64 / count,
        pass_fraction: populated.iter().filter(|&&i| verdicts[i].outcome == "pass").count() as f64 / count,
        symmetric_fraction: populated.iter().filter(|&&i| verdicts[i].symmetric).count() as f64 / count,
        no_concentration: verdicts.iter().filter(|v| v.outcome == "no-concentration").count(),
        max_cluster_weight_mean: d_mean,
        max_cluster_weight_cv: if d_mean > 0.0 { d_sd / d_mean } else { 0.0 },
        max_bin_mass_median: median(populated.iter().map(|&i| fibers[i].max_bin_mass()).collect()).unwrap_or(0.0),
        m_hat_median: median(populated.iter().filter_map(|&i| verdicts[i].m_hat).collect()),
    };
    out.write_json("disintegration.json", &summary)?;
    out.metric("k_detected", k_mode as f64);
    out.metric("k_match_fraction", summary.k_equals_floor_fraction);
    out.metric("atom_pass_fraction", summary.pass_fraction);
    out.metric("symmetric_fraction", summary.symmetric_fraction);
    if let Some(w) = median(
        populated
            .iter()
            .filter_map(|&i| verdicts[i].report.as_ref().map(|r| r.max_weight_deviation))
            .collect(),
    ) {
        out.metric("weight_deviation_median", w);
    }
    Ok(())
}

#[derive(Serialize)]
struct CoveringSummary {
    #[serde(rename = "N")]
    n_arcs: usize,
    schedule: Vec<u64>,
    m_hat_median: Vec<f64>,
    decay_fraction: f64,
    median_ratio: f64,
    median_variation: f64,
}

fn covering_stage(
    config: &ExperimentConfig,
    s: &SkewSystem,
    m: Option<&FibrationModel>,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let c = &config.covering;
    let stats = covering_decay(s, m, &config.ensemble(), c.n_arcs, &c.schedule).map_err(module("covering"))?;
    let mut csv = String::from("fiber,orbit_budget,m_hat\n");
    for st in &stats {
        for (b, v) in st.scale_schedule.iter().zip(&st.m_hat) {
            let _ = writeln!(csv, "{},{b},{}", st.fiber, num(*v));
        }
    }
    out.write("covering.csv", csv.as_bytes())?;
    let medians: Vec<f64> = (0..c.schedule.len())
        .map(|i| median(stats.iter().map(|st| st.m_hat[i]).collect()).unwrap_or(0.0))
        .collect();
    let first = medians[0];
    let last = *medians.last().expect("schedule is nonempty");
    let hi = medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = medians.iter().copied().fold(f64::INFINITY, f64::min);
    let summary = CoveringSummary {
        n_arcs: c.n_arcs,
        schedule: c.schedule.clone(),
        decay_fraction: stats.iter().filter(|st| st.decays()).count() as f64 / stats.len().max(1) as f64,
        median_ratio: last / first,
        median_variation: hi / lo,
        m_hat_median: medians,
    };
    out.write_json("covering.json", &summary)?;
    out.metric("m_hat_initial", first);
    out.metric("m_hat_final", last);
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    eps: f64,
    exponent: f64,
    mass_near_sink: f64,
}

#[derive(Serialize)]
struct RefinementRow {
    bins: usize,
    mc_max_bin_mass: f64,
    ulam_max_bin_mass: f64,
}

#[derive(Serialize)]
struct KiferSummary {
    p: f64,
    eps: f64,
    kappa: f64,
    n_steps: usize,
    exponent: f64,
    ulam_exponent: f64,
    small_noise_limit: f64,
    tv_distance: f64,
    max_bin_mass: f64,
    refinement: Vec<RefinementRow>,
    sweep: Vec<SweepRow>,
    impossibility: ImpossibilityReport,
}

fn kifer_stage(config: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let k = &config.kifer;
    let sys = config.circle_system(k.eps)?;
    let seed = derive_seed(config.seed, "kifer");
    let err = module("kifer");
    let est = estimate_stationary(&sys, k.n_steps, k.burn_in, k.n_h, seed).map_err(&err)?;
    let ulam = ulam_stationary(&sys, k.n_h).map_err(&err)?;
    let mut density = String::from("bin_center,mc_mass,ulam_mass\n");
    for (i, (a, b)) in est.density_histogram.iter().zip(&ulam).enumerate() {
        let _ = writeln!(density, "{},{},{}", num((i as f64 + 0.5) / k.n_h as f64), num(*a), num(*b));
    }
    out.write("kifer_density.csv", density.as_bytes())?;

    let mut refinement = Vec::new();
    for &bins in &k.refinement {
        let mc = estimate_stationary(&sys, k.sweep_steps, k.burn_in, bins, seed).map_err(&err)?;
        let u = ulam_stationary(&sys, bins).map_err(&err)?;
        refinement.push(RefinementRow {
            bins,
            mc_max_bin_mass: mc.max_bin_mass(),
            ulam_max_bin_mass: u.iter().copied().fold(0.0, f64::max),
        });
    }
    let mut csv = String::from("bins,mc_max_bin_mass,ulam_max_bin_mass\n");
    for r in &refinement {
        let _ = writeln!(csv, "{},{},{}", r.bins, num(r.mc_max_bin_mass), num(r.ulam_max_bin_mass));
    }
    out.write("kifer_refinement.csv", csv.as_bytes())?;

    let mut sweep = Vec::new();
    for &eps in &k.eps_sweep {
        let sys_e = config.circle_system(eps)?;
        let e = estimate_stationary(&sys_e, k.sweep_steps, k.burn_in, k.n_h, seed).map_err(&err)?;
        sweep.push(SweepRow {
            eps,
            exponent: e.exponent,
            mass_near_sink: e.mass_near(0.0, k.sink_radius),
        });
    }
    let mut csv = String::from("eps,exponent,mass_near_sink\n");
    for r in &sweep {
        let _ = writeln!(csv, "{},{},{}", num(r.eps), num(r.exponent), num(r.mass_near_sink));
    }
    out.write("kifer_sweep.csv", csv.as_bytes())?;

    let candidates: Vec<(f64, f64)> = k.candidate_atoms.iter().map(|a| (a[0], a[1])).collect();
    let impossibility = if sys.p() > 0.0 {
        atomic_impossibility_check(&sys, &candidates).map_err(&err)?
    } else {
        ImpossibilityReport {
            atoms: Vec::new(),
            contradiction: candidates.is_empty(),
        }
    };
    let tv = total_variation(&est.density_histogram, &ulam);
    let summary = KiferSummary {
        p: sys.p(),
        eps: sys.eps(),
        kappa: sys.kappa(),
        n_steps: k.n_steps,
        exponent: est.exponent,
        ulam_exponent: density_exponent(&sys, &ulam),
        small_noise_limit: sys.p() * (1.0 - sys.kappa()).ln(),
        tv_distance: tv,
        max_bin_mass: est.max_bin_mass(),
        refinement,
        sweep,
        impossibility,
    };
    out.write_json("kifer.json", &summary)?;
    out.metric("kifer_exponent", summary.exponent);
    out.metric("kifer_tv", tv);
    out.metric("kifer_max_bin_mass", summary.max_bin_mass);
    Ok(())
}
