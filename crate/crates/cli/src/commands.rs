use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use thingp::bench::{self, ArmArSpec, BenchConfig, Calibration, Protocol};
use thingp::blockmodels::LagpConfig;
use thingp::persist::{ModelKind, SavedModel};
use thingp::pipeline::{self, Method, Predicted, RunOptions};
use thingp::{
    load_csv, load_test_csv, select_thinning_number, CsvSchema, Dataset, Error, KernelFamily,
    KernelSpec, Result,
};

use crate::args::*;
use crate::output;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::ThinSelect(a) => thin_select(a),
        Command::FitSv(a) => fit_sv(a),
        Command::PredictSv(a) => predict_saved(a, ModelKind::Sv),
        Command::FitTwin(a) => fit_twin(a),
        Command::PredictTwin(a) => predict_saved(a, ModelKind::Twin),
        Command::PredictLagp(a) => predict_lagp(a),
        Command::Bench(a) => run_bench(a),
        Command::Simulate(a) => simulate(a),
    }
}

/// Schema from the flags; covariates default to every other column.
fn schema(d: &DataArgs) -> Result<CsvSchema> {
    let mut covariates = d.covariates.clone();
    if covariates.is_empty() {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(&d.data)?;
        covariates = rdr
            .headers()?
            .iter()
            .filter(|h| *h != d.response && Some(*h) != d.time.as_deref())
            .map(str::to_string)
            .collect();
    }
    Ok(CsvSchema {
        response: d.response.clone(),
        covariates,
        time: d.time.clone(),
    })
}

fn load_training(d: &DataArgs) -> Result<(Dataset, CsvSchema)> {
    let schema = schema(d)?;
    let ds = load_csv(&d.data, &schema)?;
    log::info!(
        "loaded {} rows with {} covariates from {}",
        ds.n(),
        ds.d(),
        d.data.display()
    );
    Ok((ds, schema))
}

/// Test rows with the same covariates as the (loaded) training data.
fn load_test(path: &Path, train: &Dataset, schema: &CsvSchema) -> Result<Dataset> {
    let s = CsvSchema {
        response: schema.response.clone(),
        covariates: train.covariate_names.clone(),
        time: schema.time.clone(),
    };
    load_test_csv(path, &s)
}

fn kernel(name: &str) -> Result<KernelSpec> {
    match name.parse::<KernelFamily>()? {
        KernelFamily::CompactRbf => Err(Error::Config(
            "compact-rbf is only used inside the twin-style model".into(),
        )),
        f => Ok(KernelSpec::from_family(f)),
    }
}

fn options(m: &ModelArgs) -> Result<RunOptions> {
    if m.m == 0 || m.mp == 0 {
        return Err(Error::Config("--m and --mp must be at least 1".into()));
    }
    Ok(RunOptions {
        m: m.m,
        m_p: m.mp,
        seed: m.seed,
        kernel: kernel(&m.kernel)?,
        thinning: m.thinning,
        ..Default::default()
    })
}

fn data_path(p: &Path) -> String {
    std::fs::canonicalize(p)
        .unwrap_or_else(|_| p.to_path_buf())
        .display()
        .to_string()
}

fn thin_select(a: ThinSelectArgs) -> Result<()> {
    let (ds, _) = load_training(&a.data)?;
    let c = select_thinning_number(&ds, !a.no_response, a.h_max)?;
    println!("T = {}", c.t);
    println!(
        "binding series = {}",
        c.binding_series.as_deref().unwrap_or("none")
    );
    println!(
        "binding lag = {}",
        c.binding_lag.map_or("none".to_string(), |l| l.to_string())
    );
    println!("threshold = {:.6}", c.threshold);
    if c.saturated {
        println!("saturated = true");
    }
    Ok(())
}

fn fit_and_save(
    method: Method,
    d: &DataArgs,
    opts: &RunOptions,
    out: &Path,
) -> Result<pipeline::Fitted> {
    let (train, schema) = load_training(d)?;
    let prep = pipeline::prepare(&train)?;
    let (t, _) = pipeline::choose_thinning(method, &prep.train, opts)?;
    let fitted = pipeline::fit(method, &prep, t, opts)?;
    let saved = pipeline::to_saved(
        &fitted,
        &prep,
        method,
        t,
        opts,
        &data_path(&d.data),
        &schema,
    )?;
    saved.save(out)?;
    println!("model = {}", method);
    println!("T = {t}");
    Ok(fitted)
}

fn fit_sv(a: FitSvArgs) -> Result<()> {
    let opts = options(&a.model)?;
    let method = if a.thinned {
        Method::ThinnedSv
    } else if a.include_time {
        Method::SvXt
    } else {
        Method::Sv
    };
    if !a.thinned && a.model.thinning.is_some() {
        log::warn!("--T has no effect without --thinned");
    }
    let fitted = fit_and_save(method, &a.data, &opts, &a.out)?;
    if let pipeline::Fitted::Sv {
        hp, report, plan, ..
    } = &fitted
    {
        if let Some(r) = report {
            println!("loglik = {:.6}", r.loglik);
            println!("iterations = {}", r.iterations);
        }
        println!("lengthscales = {:?}", hp.lengthscales);
        println!("signal_var = {:?}", hp.signal_var);
        println!("nugget = {:?}", hp.nugget);
        if let (Some(path), Some(plan)) = (&a.dump_plan, plan) {
            plan.write_dump(BufWriter::new(File::create(path)?))?;
        }
    }
    Ok(())
}

fn fit_twin(a: FitTwinArgs) -> Result<()> {
    let opts = options(&a.model)?;
    let method = if a.thinned {
        Method::ThinnedTwin
    } else {
        Method::Twin
    };
    let fitted = fit_and_save(method, &a.data, &opts, &a.out)?;
    if let pipeline::Fitted::Twin { models, .. } = &fitted {
        for (z, m) in models.iter().enumerate() {
            log::info!("block {z}: lambda = {}, radius = {:.4}", m.lambda, m.radius);
        }
    }
    Ok(())
}

fn write_prediction_outputs(
    out: &Predicted,
    head: &str,
    path: Option<&Path>,
    residuals: Option<&PathBuf>,
) -> Result<()> {
    let parts = out.g_prediction.as_ref().map(|g| (&out.f_prediction, g));
    output::write_predictions(path, head, &out.prediction, parts)?;
    if let Some(p) = residuals {
        match &out.residuals {
            Some(r) => output::write_residuals(p, head, r)?,
            None => log::warn!("--residuals needs --with-g; nothing written"),
        }
    }
    Ok(())
}

fn predict_saved(a: PredictArgs, kind: ModelKind) -> Result<()> {
    let text = std::fs::read_to_string(&a.model)?;
    let saved = SavedModel::from_text(&text)?;
    if saved.kind != kind {
        let want = if kind == ModelKind::Sv {
            "predict-sv"
        } else {
            "predict-twin"
        };
        return Err(Error::Config(format!(
            "{} is not a model for {want}",
            a.model.display()
        )));
    }
    let train = load_csv(&saved.data, &saved.schema)?;
    let test = load_test(&a.test, &train, &saved.schema)?;
    let (prep, fitted) = pipeline::from_saved(&saved, &train)?;
    let mut opts = pipeline::saved_options(&saved);
    if let Some(mp) = a.mp {
        if mp == 0 {
            return Err(Error::Config("--mp must be at least 1".into()));
        }
        opts.m_p = mp;
    }
    opts.with_g = a.with_g;
    let window = if a.with_g {
        pipeline::g_window(&prep, saved.thinning, &opts)?
    } else {
        saved.thinning
    };
    let out = pipeline::predict_fitted(&fitted, &prep, &test, window, &opts)?;

    let hash = output::config_hash(&format!(
        "{kind:?}\n{text}\nmp={}\nwith_g={}\nwindow={window}",
        opts.m_p, a.with_g
    ));
    let head = output::header(&hash, saved.seed);
    write_prediction_outputs(&out, &head, a.out.as_deref(), a.residuals.as_ref())?;
    if let Some(p) = &a.blocks_out {
        match &out.blocks {
            Some(b) => output::write_blocks(p, &head, b)?,
            None => log::warn!("--blocks-out applies to ensemble models only"),
        }
    }
    if let Some(p) = &a.dump_plan {
        match &out.plan {
            Some(plan) => plan.write_dump(BufWriter::new(File::create(p)?))?,
            None => log::warn!("--dump-plan applies to scaled-Vecchia models only"),
        }
    }
    Ok(())
}

fn predict_lagp(a: PredictLagpArgs) -> Result<()> {
    if a.n_end == 0 {
        return Err(Error::Config("--n-end must be at least 1".into()));
    }
    let (train, schema) = load_training(&a.data)?;
    let test = load_test(&a.test, &train, &schema)?;
    let method = if a.thinned {
        Method::ThinnedLagp
    } else {
        Method::Lagp
    };
    let opts = RunOptions {
        seed: a.seed,
        thinning: a.thinning,
        with_g: a.with_g,
        lagp: LagpConfig {
            n_end: a.n_end,
            ..Default::default()
        },
        ..Default::default()
    };
    let prep = pipeline::prepare(&train)?;
    let (t, _) = pipeline::choose_thinning(method, &prep.train, &opts)?;
    let fitted = pipeline::fit(method, &prep, t, &opts)?;
    let window = if a.with_g {
        pipeline::g_window(&prep, t, &opts)?
    } else {
        t
    };
    let out = pipeline::predict_fitted(&fitted, &prep, &test, window, &opts)?;
    let hash = output::config_hash(&format!(
        "lagp\n{:?}\n{schema:?}\nT={t}\nn_end={}\nwith_g={}",
        data_path(&a.data.data),
        a.n_end,
        a.with_g
    ));
    write_prediction_outputs(
        &out,
        &output::header(&hash, a.seed),
        a.out.as_deref(),
        a.residuals.as_ref(),
    )
}

/// `a..b` (inclusive) or `a,b,c`.
pub fn parse_list(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse list '{s}'"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect()
}

fn run_bench(a: BenchArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    if let Some(p) = &a.protocol {
        cfg.protocol = p.parse::<Protocol>()?;
    }
    if let Some(m) = &a.methods {
        cfg.methods = m
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = parse_list(s)?;
    }
    if let Some(t) = &a.t_grid {
        cfg.t_grid = parse_list(t)?.into_iter().map(|v| v as usize).collect();
    }
    if let Some(v) = a.lag_order {
        cfg.scenario.lag_order = v;
    }
    if let Some(v) = a.n_train {
        cfg.scenario.n_train = v;
    }
    if let Some(v) = a.n_test {
        cfg.scenario.n_test = v;
    }
    if let Some(v) = a.m {
        cfg.m = v;
    }
    if let Some(v) = a.mp {
        cfg.m_p = v;
    }
    cfg.with_g |= a.with_g;
    let result = bench::run_protocol(&cfg)?;
    let hash = output::config_hash(&format!("{cfg:?}"));
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    bench::report::write_all(&result, &a.out_dir, Some(&output::header(&hash, seed)))?;
    print!("{}", bench::report::render_table(&result));
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cal = match &a.calibration {
        Some(p) => toml::from_str::<Calibration>(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("calibration file: {e}")))?,
        None => Calibration::default(),
    };
    let spec = ArmArSpec::calibrated(a.lag_order, &cal, a.seed);
    let (train, test) = bench::simulate(&spec, a.n_train, a.n_test)?;
    std::fs::create_dir_all(&a.out_dir)?;
    train.write_csv(BufWriter::new(File::create(a.out_dir.join("train.csv"))?))?;
    test.write_csv(BufWriter::new(File::create(a.out_dir.join("test.csv"))?))?;
    println!(
        "wrote {} training and {} test rows to {}",
        train.n(),
        test.n(),
        a.out_dir.display()
    );
    Ok(())
}
