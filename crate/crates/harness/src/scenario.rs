//! Scenario execution: channels, initialization, meta-optimization, records.

use std::time::Instant;

use rayon::prelude::*;

use metaopt_core::channel::{sample_csit_ensemble, CsitEnsemble, RisLink, sample_ris_link, AntennaArray, PathLoss, SteeringForm, UserGroupLayout};
use metaopt_core::init::{ris_mrt_init, ris_warm_start, run_ris, sdma_mrt_init, svd_mrt_init, PowerSplit, RisLearners};
use metaopt_core::meta::{meta_optimize_single, MetaVariable, MlpInit, Projection};
use metaopt_core::mlp::MlpSpec;
use metaopt_core::objectives::{HrsmaObjective, QosPenalty, RisMode, RisObjective, SensingReward};
use metaopt_core::rates::{beampattern, beampattern_streams, PrecoderMatrix, PrecoderMode};
use metaopt_core::{ComplexMatrix, SeededRng};

use crate::config::{Access, ArrayKind, ScenarioConfig, SteeringKind, Suite};
use crate::error::HarnessError;
use crate::records::ResultRecord;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
    /// Record wall-clock seconds instead of 0.
    pub timing: bool,
}

/// Everything one run at one grid point produced.
#[derive(Clone, Debug)]
pub struct PointOutcome {
    pub record: ResultRecord,
    pub loss_trace: Vec<f64>,
    pub best_trace: Vec<f64>,
    pub power_budget: f64,
    /// `tr(P P^H)` of the buffered precoder.
    pub precoder_power: f64,
    pub precoder: Option<PrecoderMatrix<f64>>,
    /// Buffered `N_t x K` precoder of surface suites.
    pub surface_precoder: Option<ComplexMatrix<f64>>,
    pub scattering: Option<ComplexMatrix<f64>>,
    /// `‖Φ^H Φ - I‖_F` of the buffered surface.
    pub unitarity_defect: Option<f64>,
    /// Sum rate of the diagonal warm start (bdris only).
    pub warm_sum_rate: Option<f64>,
}

fn numeric(context: String) -> impl FnOnce(metaopt_core::Error) -> HarnessError {
    move |source| HarnessError::Numeric { context, source }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn build_array(cfg: &ScenarioConfig) -> AntennaArray<f64> {
    let g = &cfg.geometry;
    let n = cfg.system.antennas;
    let array = match g.array.unwrap_or(ArrayKind::Circular) {
        ArrayKind::Circular => AntennaArray::uniform_circular(n),
        ArrayKind::Linear => AntennaArray::uniform_linear(n, g.spacing.unwrap_or(0.5)),
    };
    let form = match g.steering.unwrap_or(SteeringKind::Auto) {
        SteeringKind::Auto if cfg.suite == Suite::Isac => SteeringForm::Positional,
        SteeringKind::Auto => SteeringForm::Auto,
        SteeringKind::Linear => SteeringForm::Linear,
        SteeringKind::Positional => SteeringForm::Positional,
    };
    array.with_steering(form)
}

pub fn build_layout(cfg: &ScenarioConfig) -> Result<UserGroupLayout<f64>, HarnessError> {
    UserGroupLayout::equal_groups(cfg.system.users, &cfg.group_azimuths(), cfg.spread())
        .map_err(numeric("user layout".into()))
}

fn pathloss(cfg: &ScenarioConfig) -> PathLoss {
    let r = cfg.ris();
    let d = PathLoss::default();
    PathLoss {
        xi0_db: r.reference_loss_db.unwrap_or(d.xi0_db),
        d0: d.d0,
        d_br: r.distance_br.unwrap_or(d.d_br),
        d_ru: r.distance_ru.unwrap_or(d.d_ru),
        eps_br: r.exponent_br.unwrap_or(d.eps_br),
        eps_ru: r.exponent_ru.unwrap_or(d.eps_ru),
    }
}

/// Generator for the channels of `realization`, shared by every grid point and suite.
fn channel_rng(cfg: &ScenarioConfig, realization: usize) -> SeededRng {
    SeededRng::new(cfg.seed).fork(realization as u64)
}

/// Generator for the learner weights at `(realization, grid point)`.
fn learner_rng(cfg: &ScenarioConfig, realization: usize, point: usize) -> SeededRng {
    SeededRng::new(cfg.seed).fork(realization as u64).fork(1 + point as u64)
}

/// CSIT ensemble of `realization`; identical for every grid point and for
/// suites that share the system fields.
pub fn realization_ensemble(cfg: &ScenarioConfig, realization: usize) -> Result<CsitEnsemble<f64>, HarnessError> {
    sample_csit_ensemble(
        &mut channel_rng(cfg, realization),
        &build_layout(cfg)?,
        &build_array(cfg),
        cfg.error_variance(),
        cfg.samples(),
        cfg.quadrature_points(),
    )
    .map_err(numeric(format!("{} realization {realization} channels", cfg.suite)))
}

/// Surface channels of `realization`, shared by ris and bdris.
pub fn realization_link(cfg: &ScenarioConfig, realization: usize) -> Result<RisLink<f64>, HarnessError> {
    sample_ris_link(
        &mut channel_rng(cfg, realization),
        cfg.system.antennas,
        cfg.system.users,
        cfg.system.elements.unwrap_or(1),
        pathloss(cfg),
        dbm_to_watts(cfg.noise_dbm()),
    )
    .map_err(numeric(format!("{} realization {realization} channels", cfg.suite)))
}

/// Runs one realization at grid point `point`; `lambda` is the sensing
/// weight for ISAC and ignored otherwise.
pub fn run_point(cfg: &ScenarioConfig, realization: usize, point: usize, lambda: f64) -> Result<PointOutcome, HarnessError> {
    let grid = cfg.grid();
    let level = *grid.get(point).ok_or_else(|| HarnessError::Config {
        field: "grid".into(),
        reason: format!("point {point} outside a grid of {}", grid.len()),
    })?;
    if cfg.suite.is_surface() {
        run_surface_point(cfg, realization, point, level)
    } else {
        run_precoder_point(cfg, realization, point, level, lambda)
    }
}

fn run_precoder_point(
    cfg: &ScenarioConfig,
    realization: usize,
    point: usize,
    snr_db: f64,
    lambda: f64,
) -> Result<PointOutcome, HarnessError> {
    let ctx = format!("{} realization {realization} at {snr_db} dB", cfg.suite);
    let layout = build_layout(cfg)?;
    let array = build_array(cfg);
    let ensemble = realization_ensemble(cfg, realization)?;
    let pt = db_to_linear(snr_db);
    let mode = match (cfg.suite, cfg.isac_access()) {
        (Suite::Sdma, _) | (Suite::Isac, Access::Sdma) => PrecoderMode::Sdma,
        _ => PrecoderMode::Hrsma,
    };
    let p0 = match mode {
        PrecoderMode::Hrsma => {
            let [common, group, private] = cfg.power_split();
            svd_mrt_init(&ensemble, &layout, pt, PowerSplit { common, group, private })
        }
        PrecoderMode::Sdma => sdma_mrt_init(&ensemble, &layout, pt),
    }
    .map_err(numeric(ctx.clone()))?;
    let qos = cfg.qos().map(|(thresholds, weight)| QosPenalty { thresholds, weight });
    let record_lambda = match (&qos, cfg.suite) {
        (Some(q), _) => q.weight,
        (None, Suite::Isac) => lambda,
        _ => 0.0,
    };
    let sensing = (cfg.suite == Suite::Isac).then(|| SensingReward { targets: cfg.targets(), array: array.clone(), weight: lambda });
    let has_qos = qos.is_some();
    let objective =
        HrsmaObjective::new(&ensemble, &layout, 1.0, mode, qos, sensing).map_err(numeric(ctx.clone()))?;
    let x0 = objective.to_variable(&p0.data).map_err(numeric(ctx.clone()))?;
    let var = MetaVariable::new(x0.clone(), MlpSpec::precoder(x0.len(), cfg.hidden()), cfg.learning_rate())
        .with_projection(Projection::Power(pt));

    let start = Instant::now();
    let out = meta_optimize_single(var, cfg.iterations(), &mut learner_rng(cfg, realization, point), |tape, x| {
        Ok(objective.record(tape, x)?.loss)
    })
    .map_err(numeric(ctx.clone()))?;
    let seconds = start.elapsed().as_secs_f64();

    let best = &out.best[0];
    let eval = objective.evaluate(best).map_err(numeric(ctx.clone()))?;
    let precoder = objective.precoder(best, pt).map_err(numeric(ctx))?;
    Ok(PointOutcome {
        record: ResultRecord {
            suite: cfg.suite.to_string(),
            seed: cfg.seed,
            realization,
            snr_db,
            lambda: record_lambda,
            esr: eval.saf.sum_rate(),
            probing_power: eval.probing_power,
            qos_violations: if has_qos { eval.violations } else { 0 },
            initial_loss: out.initial_loss,
            final_loss: out.best_loss,
            seconds,
            allocated: eval.allocated,
        },
        loss_trace: out.loss_trace,
        best_trace: out.best_trace,
        power_budget: pt,
        precoder_power: precoder.power(),
        precoder: Some(precoder),
        surface_precoder: None,
        scattering: None,
        unitarity_defect: None,
        warm_sum_rate: None,
    })
}

fn run_surface_point(cfg: &ScenarioConfig, realization: usize, point: usize, power_dbm: f64) -> Result<PointOutcome, HarnessError> {
    let ctx = format!("{} realization {realization} at {power_dbm} dBm", cfg.suite);
    let elements = cfg.system.elements.unwrap_or(1);
    let link = realization_link(cfg, realization)?;
    let pt = dbm_to_watts(power_dbm);
    let p0 = ris_mrt_init(&link, &ComplexMatrix::identity(elements), pt).map_err(numeric(ctx.clone()))?.to_interleaved();
    let learners = RisLearners {
        hidden: cfg.hidden(),
        precoder_lr: cfg.learning_rate(),
        scattering_lr: cfg.scattering_learning_rate(),
    };
    let mut rng = learner_rng(cfg, realization, point);
    let weight = cfg.ris_weight();
    let start = Instant::now();
    let (objective, run, warm_sum_rate) = match cfg.suite {
        Suite::Bdris => {
            let warm = ris_warm_start(&link, p0, pt, cfg.warm_iterations(), &learners, (MlpInit::Glorot, MlpInit::Glorot), &mut rng)
                .map_err(numeric(ctx.clone()))?;
            let objective = RisObjective::new(&link, RisMode::BeyondDiagonal, weight).map_err(numeric(ctx.clone()))?;
            let run = run_ris(
                &objective,
                warm.precoder,
                warm.scattering,
                pt,
                cfg.iterations(),
                &learners,
                (MlpInit::Glorot, MlpInit::Glorot),
                &mut rng,
            )
            .map_err(numeric(ctx.clone()))?;
            (objective, run, Some(warm.diagonal.eval.sum_rate))
        }
        _ => {
            let objective = RisObjective::new(&link, RisMode::Diagonal, weight)
                .map_err(numeric(ctx.clone()))?
                .with_literal_diagonal_penalty(cfg.ris().literal_diagonal_penalty.unwrap_or(false));
            let run = run_ris(
                &objective,
                p0,
                vec![0.0; elements],
                pt,
                cfg.iterations(),
                &learners,
                (MlpInit::Glorot, MlpInit::Glorot),
                &mut rng,
            )
            .map_err(numeric(ctx.clone()))?;
            (objective, run, None)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let scattering = objective.scattering_matrix(&run.scattering).map_err(numeric(ctx.clone()))?;
    Ok(PointOutcome {
        record: ResultRecord {
            suite: cfg.suite.to_string(),
            seed: cfg.seed,
            realization,
            snr_db: power_dbm,
            lambda: weight,
            esr: run.eval.sum_rate,
            probing_power: None,
            qos_violations: 0,
            initial_loss: run.outcome.initial_loss,
            final_loss: run.outcome.best_loss,
            seconds,
            allocated: run.eval.rates.clone(),
        },
        loss_trace: run.outcome.loss_trace.clone(),
        best_trace: run.outcome.best_trace.clone(),
        power_budget: pt,
        precoder_power: run.precoder.iter().map(|v| v * v).sum(),
        precoder: None,
        surface_precoder: Some(
            ComplexMatrix::from_interleaved(cfg.system.antennas, cfg.system.users, &run.precoder).map_err(numeric(ctx))?,
        ),
        scattering: Some(scattering),
        unitarity_defect: Some(run.eval.unitarity_defect),
        warm_sum_rate,
    })
}

fn with_pool<R: Send>(opts: &RunOptions, f: impl FnOnce() -> R + Send) -> Result<R, HarnessError> {
    match opts.workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().map_err(|e| HarnessError::Config {
                field: "parallel".into(),
                reason: e.to_string(),
            })?;
            Ok(pool.install(f))
        }
    }
}

/// Every `(realization, λ, grid point)` of the config, ordered by those indices.
pub fn run_outcomes(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<PointOutcome>, HarnessError> {
    cfg.validate()?;
    let lambdas = if cfg.suite == Suite::Isac { cfg.lambdas() } else { vec![0.0] };
    let mut items = Vec::new();
    for r in 0..cfg.realizations {
        for &l in &lambdas {
            for p in 0..cfg.grid().len() {
                items.push((r, p, l));
            }
        }
    }
    let results = with_pool(opts, || {
        items.par_iter().map(|&(r, p, l)| run_point(cfg, r, p, l)).collect::<Vec<Result<PointOutcome, HarnessError>>>()
    })?;
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        let mut o = r?;
        if !opts.timing {
            o.record.seconds = 0.0;
        }
        out.push(o);
    }
    Ok(out)
}

pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<ResultRecord>, HarnessError> {
    Ok(run_outcomes(cfg, opts)?.into_iter().map(|o| o.record).collect())
}

/// ISAC runs over the whole λ grid.
pub fn tradeoff_sweep(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<ResultRecord>, HarnessError> {
    if cfg.suite != Suite::Isac {
        return Err(HarnessError::Config { field: "suite".into(), reason: "tradeoff sweeps need the isac suite".into() });
    }
    run_scenario(cfg, opts)
}

/// Mean of a column per `(snr_db, lambda)`, in first-seen order.
pub fn summarize(records: &[ResultRecord]) -> Vec<Summary> {
    let mut out: Vec<Summary> = Vec::new();
    for r in records {
        let key = (r.snr_db.to_bits(), r.lambda.to_bits());
        let idx = match out.iter().position(|s| (s.snr_db.to_bits(), s.lambda.to_bits()) == key) {
            Some(i) => i,
            None => {
                out.push(Summary { suite: r.suite.clone(), snr_db: r.snr_db, lambda: r.lambda, ..Summary::default() });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.runs += 1;
        s.esr += r.esr;
        s.probing_power += r.probing_power.unwrap_or(0.0);
        s.qos_violations += r.qos_violations as f64;
    }
    for s in &mut out {
        let n = s.runs as f64;
        s.esr /= n;
        s.probing_power /= n;
        s.qos_violations /= n;
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub suite: String,
    pub snr_db: f64,
    pub lambda: f64,
    pub runs: usize,
    pub esr: f64,
    pub probing_power: f64,
    pub qos_violations: f64,
}

/// Beam power over a uniform angle grid with per-stream columns.
#[derive(Clone, Debug, PartialEq)]
pub struct BeampatternTable {
    pub groups: usize,
    pub angles: Vec<f64>,
    pub total: Vec<f64>,
    pub common: Vec<f64>,
    /// `group[g][i]` is group `g`'s common stream at angle `i`.
    pub group: Vec<Vec<f64>>,
    /// Sum over private streams.
    pub private: Vec<f64>,
}

pub fn uniform_angles(resolution: usize) -> Vec<f64> {
    let half = std::f64::consts::FRAC_PI_2;
    match resolution {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn beampattern_table(
    p: &PrecoderMatrix<f64>,
    array: &AntennaArray<f64>,
    resolution: usize,
) -> Result<BeampatternTable, HarnessError> {
    let angles = uniform_angles(resolution);
    let streams = beampattern_streams(&p.data, array, &angles).map_err(numeric("beampattern".into()))?;
    let total = beampattern(&p.data, array, &angles).map_err(numeric("beampattern".into()))?;
    let g = p.groups;
    Ok(BeampatternTable {
        groups: g,
        common: streams.iter().map(|s| s[0]).collect(),
        group: (0..g).map(|j| streams.iter().map(|s| s[1 + j]).collect()).collect(),
        private: streams.iter().map(|s| s[1 + g..].iter().sum()).collect(),
        total,
        angles,
    })
}

/// Runs realization `realization` at the first grid point with sensing
/// weight `lambda` and tabulates the beampattern of its buffered precoder.
pub fn beampattern_dump(
    cfg: &ScenarioConfig,
    resolution: usize,
    realization: usize,
    lambda: f64,
) -> Result<BeampatternTable, HarnessError> {
    if cfg.suite.is_surface() {
        return Err(HarnessError::Config { field: "suite".into(), reason: "beampatterns need a precoder suite".into() });
    }
    if resolution < 2 {
        return Err(HarnessError::Config { field: "resolution".into(), reason: "need at least 2 angles".into() });
    }
    let out = run_point(cfg, realization, 0, lambda)?;
    let p = out.precoder.expect("precoder suites return a precoder");
    beampattern_table(&p, &build_array(cfg), resolution)
}

pub fn write_beampattern_to<W: std::io::Write>(table: &BeampatternTable, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["angle".to_string(), "total".into(), "common".into()];
    header.extend((1..=table.groups).map(|g| format!("group_{g}")));
    header.push("private".into());
    w.write_record(&header)?;
    for i in 0..table.angles.len() {
        let mut row = vec![table.angles[i], table.total[i], table.common[i]];
        row.extend(table.group.iter().map(|g| g[i]));
        row.push(table.private[i]);
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush().map_err(|e| HarnessError::Io { path: "<csv>".into(), source: e })?;
    Ok(())
}

pub fn write_beampattern(table: &BeampatternTable, path: &std::path::Path) -> Result<(), HarnessError> {
    let io = |e| HarnessError::Io { path: path.to_path_buf(), source: e };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let file = std::fs::File::create(path).map_err(io)?;
    write_beampattern_to(table, std::io::BufWriter::new(file))
}
