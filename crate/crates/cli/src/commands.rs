use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use baryflow::datasets::{
    default_split, generate as generate_dataset, generate_train_test, load_csv, load_points_csv,
    write_csv, write_points_csv, GeneratorKind, GeneratorSpec,
};
use baryflow::metrics::{
    convergence_trace, pairwise_flip_wd, transportation_cost, SinkhornConfig, TraceRow,
};
use baryflow::{fit_flow, FlowModel, LabeledDataset, SampleMatrix, WeightVector};

use crate::config::{DataSource, RunConfig};
use crate::error::CliError;
use crate::svg::{self, Panel};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub eps: Option<f64>,
    pub max_iter: Option<usize>,
    pub out: Option<PathBuf>,
    pub trace: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.eps {
            cfg.eps = e;
        }
        if let Some(m) = self.max_iter {
            cfg.max_iter = m;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.trace |= self.trace;
    }
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    overrides.apply(&mut cfg);
    Ok(cfg)
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
fn emit(
    path: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> Result<(), baryflow::Error>,
) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut f = create(p)?;
            write(&mut f).map_err(|e| CliError::input(p, e))?;
            f.flush().map_err(|e| CliError::io(p, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

pub fn load_model(path: &Path) -> Result<FlowModel, CliError> {
    FlowModel::load(open(path)?).map_err(|e| CliError::input(path, e))
}

fn load_dataset(path: &Path) -> Result<LabeledDataset, CliError> {
    load_csv(open(path)?).map_err(|e| CliError::input(path, e))
}

fn load_points(path: &Path, label: i64) -> Result<SampleMatrix, CliError> {
    load_points_csv(open(path)?, label).map_err(|e| CliError::input(path, e))
}

/// Generator spec and per-class train/test sizes described by a config.
pub fn generator_spec(cfg: &RunConfig) -> Option<(GeneratorSpec, usize, usize)> {
    let DataSource::Generator {
        kind,
        n_train,
        n_test,
        k,
        noise,
        seed,
        components,
    } = &cfg.data
    else {
        return None;
    };
    let mut spec = GeneratorSpec::new(*kind, 0).with_seed(seed.unwrap_or(cfg.seed));
    if !components.is_empty() {
        spec.k = components.len();
        spec.gaussians = Some(components.clone());
    }
    if let Some(k) = k {
        spec.k = *k;
    }
    if let Some(noise) = noise {
        spec.noise = *noise;
    }
    let (dtrain, dtest) = default_split(*kind, spec.k.max(1));
    Some((spec, n_train.unwrap_or(dtrain), n_test.unwrap_or(dtest)))
}

/// Training data and held-out data (the training data again when none is configured).
pub fn load_data(cfg: &RunConfig) -> Result<(LabeledDataset, LabeledDataset), CliError> {
    if let Some((spec, n_train, n_test)) = generator_spec(cfg) {
        if n_train == 0 {
            return Err(CliError::Usage("n_train must be at least 1".into()));
        }
        if spec.kind != GeneratorKind::Gaussians && spec.gaussians.is_some() {
            return Err(CliError::Usage(
                "`component` lines need `data = gaussians`".into(),
            ));
        }
        if n_test == 0 {
            let train = generate_dataset(&GeneratorSpec {
                n_per_class: n_train,
                ..spec
            })?;
            return Ok((train.clone(), train));
        }
        return Ok(generate_train_test(&spec, n_train, n_test)?);
    }
    let DataSource::Csv { train, test } = &cfg.data else {
        unreachable!()
    };
    let tr = load_dataset(train)?;
    let te = match test {
        Some(p) => load_dataset(p)?,
        None => tr.clone(),
    };
    Ok((tr, te))
}

fn weights(cfg: &RunConfig, k: usize) -> Result<WeightVector, CliError> {
    match &cfg.weights {
        None => Ok(WeightVector::uniform(k)),
        Some(w) if w.len() != k => Err(CliError::Usage(format!(
            "config gives {} weights but the data has {k} classes",
            w.len()
        ))),
        Some(w) => WeightVector::normalized(w.clone()).map_err(|e| CliError::Usage(e.to_string())),
    }
}

fn sinkhorn_cfg(cfg: &RunConfig) -> SinkhornConfig {
    SinkhornConfig::new(cfg.eps, cfg.max_iter)
}

fn metrics_csv(layers: usize, tc: f64, wd: f64) -> String {
    format!("layers,tc,wd\n{layers},{tc},{wd}\n")
}

fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("layer,wd,tc,wall_time_ms\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.3}\n",
            r.layer, r.wd, r.tc, r.wall_time_ms
        ));
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| CliError::io(path, e))
}

fn require_schedule(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.schedule.is_empty() {
        return Err(CliError::Usage(
            "the layer schedule is empty; add at least one `layer = ...` line".into(),
        ));
    }
    Ok(())
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    require_schedule(cfg)?;
    let (train, test) = load_data(cfg)?;
    let w = weights(cfg, train.k())?;
    let sk = sinkhorn_cfg(cfg);
    let (model, rows) = if cfg.trace {
        let (rows, model) = convergence_trace(&train, &test, &w, &cfg.schedule, &sk, cfg.seed)?;
        (model, Some(rows))
    } else {
        (fit_flow(&train, &w, &cfg.schedule, cfg.seed)?, None)
    };
    let (tc, wd) = match rows.as_ref().and_then(|r| r.last()) {
        Some(last) => (last.tc, last.wd),
        None => (
            transportation_cost(&test, &model, &w)?,
            pairwise_flip_wd(&test, &model, &sk)?,
        ),
    };
    let model_path = cfg.out.join("model.json");
    let mut f = create(&model_path)?;
    model
        .save(&mut f)
        .map_err(|e| CliError::input(&model_path, e))?;
    f.flush().map_err(|e| CliError::io(&model_path, e))?;
    write_text(
        &cfg.out.join("metrics.csv"),
        &metrics_csv(model.layers().len(), tc, wd),
    )?;
    if let Some(rows) = &rows {
        write_text(&cfg.out.join("trace.csv"), &trace_csv(rows))?;
        println!(
            "layer 0 WD {}, layer {} WD {}",
            rows[0].wd,
            rows.len() - 1,
            wd
        );
    }
    println!(
        "fitted {} layers on {} classes; TC {tc}, WD {wd}; wrote {}",
        model.layers().len(),
        model.k(),
        cfg.out.display()
    );
    Ok(())
}

pub fn trace(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    require_schedule(cfg)?;
    let (train, test) = load_data(cfg)?;
    let w = weights(cfg, train.k())?;
    let (rows, _) = convergence_trace(
        &train,
        &test,
        &w,
        &cfg.schedule,
        &sinkhorn_cfg(cfg),
        cfg.seed,
    )?;
    let path = out.map_or_else(|| cfg.out.join("trace.csv"), Path::to_path_buf);
    write_text(&path, &trace_csv(&rows))
}

pub fn generate(cfg: &RunConfig, out: &Path, test_out: Option<&Path>) -> Result<(), CliError> {
    let Some((spec, _, n_test)) = generator_spec(cfg) else {
        return Err(CliError::Usage(
            "generate needs a generator (`data = ...`), not CSV input".into(),
        ));
    };
    let (train, test) = load_data(cfg)?;
    emit(Some(out), |w| write_csv(&train, w, true))?;
    match test_out {
        Some(p) if n_test > 0 => emit(Some(p), |w| write_csv(&test, w, true))?,
        Some(_) => return Err(CliError::Usage("--test-out needs n_test > 0".into())),
        None => {}
    }
    println!(
        "{:?}: {} classes, {} train / {} test points per class, seed {}",
        spec.kind,
        train.k(),
        train.class(0).n(),
        if test_out.is_some() { n_test } else { 0 },
        spec.seed
    );
    Ok(())
}

pub fn transform(
    model: &Path,
    input: &Path,
    class: i64,
    inverse: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load_model(model)?;
    let j = model.class_index(class)?;
    let points = load_points(input, class)?;
    let result = if inverse {
        model.inverse_transform(j, &points)?
    } else {
        model.transform(j, &points)?
    };
    emit(out, |w| write_points_csv(&result, w, true))
}

pub fn flip(
    model: &Path,
    input: &Path,
    from: i64,
    to: i64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load_model(model)?;
    let (a, b) = (model.class_index(from)?, model.class_index(to)?);
    let points = load_points(input, from)?;
    let result = model.flip(a, b, &points)?;
    emit(out, |w| write_points_csv(&result, w, true))
}

pub fn eval(
    model: &Path,
    test: &Path,
    sk: &SinkhornConfig,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load_model(model)?;
    let test = load_dataset(test)?;
    let tc = transportation_cost(&test, &model, model.weights())?;
    let wd = pairwise_flip_wd(&test, &model, sk)?;
    let text = metrics_csv(model.layers().len(), tc, wd);
    match out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn plot_data(
    model: &Path,
    data: &Path,
    out: &Path,
    svg_out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load_model(model)?;
    let ds = load_dataset(data)?;
    let latent = model.transform_dataset(&ds)?;
    let labels = model.labels().to_vec();
    let d = ds.d();
    let mut csv = (0..d)
        .map(|i| format!("x{i}"))
        .collect::<Vec<_>>()
        .join(",");
    csv.push_str(",class,role\n");
    let mut push = |pts: &SampleMatrix, label: i64, role: &str| {
        for r in pts.rows() {
            for v in r {
                csv.push_str(&format!("{v},"));
            }
            csv.push_str(&format!("{label},{role}\n"));
        }
    };
    let mut flipped = Vec::new();
    for (j, x) in ds.classes().iter().enumerate() {
        push(x, labels[j], "original");
        push(latent.class(j), labels[j], "latent");
        for (c, &target) in labels.iter().enumerate() {
            if c != j {
                let f = model.flip(j, c, x)?;
                push(&f, labels[j], &format!("flipped_to_{target}"));
                flipped.push((c, f));
            }
        }
    }
    write_text(out, &csv)?;
    if let Some(svg_path) = svg_out {
        if d != 2 {
            eprintln!("notice: SVG skipped because the data has {d} dimensions, not 2");
            return Ok(());
        }
        let scatter = |sets: Vec<(usize, &SampleMatrix)>| -> Vec<(f64, f64, usize)> {
            sets.into_iter()
                .flat_map(|(c, m)| m.rows().map(move |r| (r[0], r[1], c)))
                .collect()
        };
        let panels = [
            Panel {
                title: "original".into(),
                points: scatter(ds.classes().iter().enumerate().collect()),
            },
            Panel {
                title: "shared latent".into(),
                points: scatter(latent.classes().iter().enumerate().collect()),
            },
            Panel {
                title: "flipped (colour = target class)".into(),
                points: scatter(flipped.iter().map(|(c, m)| (*c, m)).collect()),
            },
        ];
        write_text(svg_path, &svg::render(&panels))?;
    }
    Ok(())
}
