use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use evdenoise::autodiff::init_rng;
use evdenoise::event::{read_events, write_events, EventFormat};
use evdenoise::filters::{build_filter, run_filter, Denoiser, FilterKind};
use evdenoise::harness::{
    compare_modes, confusion, fmt_value, memory_estimate, metrics_csv, metrics_from_counts, report, timing_csv,
    windowed_eval, MetricsRow, RunConfig, CONVENTION_NOTE,
};
use evdenoise::kogtl::{kogtl_pipeline, read_frames, write_frame};
use evdenoise::synth::{build_training_set, expected_noise_count, generate, parse_scene, SceneSpec};
use evdenoise::transformer::{evaluate, predict_stream, train, DenoiseModel, GnnFilter, PredictMode, TrainingSample};
use evdenoise::{Decision, Error, EventStream, Label, Result, SensorGeometry};

use crate::manifest;
use crate::{
    BenchArgs, Cli, Command, EvalArgs, FilterArgs, FormatArg, LabelArgs, ModeArg, ReportArgs, SynthArgs, TrainArgs,
};

struct Ctx<'a> {
    cli: &'a Cli,
    cfg: RunConfig,
    geometry: SensorGeometry,
    outputs: Vec<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_text(&fs::read_to_string(path)?)?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_sensor(s: &str) -> Result<SensorGeometry> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::InvalidArgument(format!("sensor must look like 346x260, got `{s}`")))?;
    let num = |v: &str| v.trim().parse::<u32>().map_err(|_| Error::InvalidArgument(format!("bad sensor size `{s}`")));
    SensorGeometry::new(num(w)?, num(h)?)
}

pub fn run(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out_dir)?;
    let geometry = match &cli.sensor {
        Some(s) => parse_sensor(s)?,
        None => SensorGeometry::default(),
    };
    let mut ctx = Ctx { cli, cfg: load_config(cli)?, geometry, outputs: Vec::new() };
    let name = match &cli.command {
        Command::Synth(a) => ctx.synth(a).map(|_| "synth"),
        Command::Label(a) => ctx.label(a).map(|_| "label"),
        Command::Train(a) => ctx.train(a).map(|_| "train"),
        Command::Filter(a) => ctx.filter(a).map(|_| "filter"),
        Command::Eval(a) => ctx.eval(a).map(|_| "eval"),
        Command::Bench(a) => ctx.bench(a).map(|_| "bench"),
        Command::Report(a) => ctx.report(a).map(|_| "report"),
    }?;
    manifest::append(&cli.out_dir, name, &ctx.cfg, &ctx.outputs)
}

impl Ctx<'_> {
    /// Output paths are placed under the output directory.
    fn out_path(&mut self, p: &Path) -> Result<PathBuf> {
        let path = if p.is_absolute() { p.to_path_buf() } else { self.cli.out_dir.join(p) };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.outputs.push(path.clone());
        Ok(path)
    }

    fn format_for(&self, path: &Path) -> EventFormat {
        match self.cli.format {
            Some(FormatArg::Csv) => EventFormat::Csv,
            Some(FormatArg::Bin) => EventFormat::Binary,
            None => EventFormat::from_path(path),
        }
    }

    fn read(&self, path: &Path) -> Result<EventStream> {
        read_events(path, self.format_for(path), self.geometry)
    }

    fn write(&mut self, stream: &EventStream, path: &Path) -> Result<PathBuf> {
        let out = self.out_path(path)?;
        write_events(stream, &out, self.format_for(&out))?;
        Ok(out)
    }

    fn synth(&mut self, a: &SynthArgs) -> Result<()> {
        let mut scene = match (&a.scene, &a.preset) {
            (Some(path), _) => parse_scene(&fs::read_to_string(path)?)?,
            (None, Some(name)) => SceneSpec::preset(name, self.cfg.seed)?,
            (None, None) => return Err(Error::InvalidArgument("synth needs --scene or --preset".into())),
        };
        if let Some(seed) = self.cli.seed {
            scene.seed = seed;
        }
        if self.cli.sensor.is_some() {
            scene.geometry = self.geometry;
        }
        let data = generate(&scene)?;
        let events = self.write(&data.stream, &a.out_events)?;
        let dir = self.out_path(&a.out_frames)?;
        fs::create_dir_all(&dir)?;
        for f in &data.frames {
            write_frame(f, &dir)?;
        }
        let m = data.manifest;
        let mut s = String::from("key,value\n");
        let _ = writeln!(s, "width,{}", scene.geometry.width);
        let _ = writeln!(s, "height,{}", scene.geometry.height);
        let _ = writeln!(s, "duration_us,{}", scene.duration_us);
        let _ = writeln!(s, "seed,{}", scene.seed);
        let _ = writeln!(s, "real,{}", m.real);
        let _ = writeln!(s, "noise,{}", m.noise);
        let _ = writeln!(s, "hot,{}", m.hot);
        let _ = writeln!(s, "expected_noise,{}", expected_noise_count(&scene));
        let _ = writeln!(s, "frames,{}", data.frames.len());
        fs::write(self.out_path(&a.manifest)?, s)?;
        println!(
            "{} events ({} real, {} noise, {} hot) and {} frames -> {}",
            data.stream.len(),
            m.real,
            m.noise,
            m.hot,
            data.frames.len(),
            events.display()
        );
        Ok(())
    }

    fn label(&mut self, a: &LabelArgs) -> Result<()> {
        let frames = read_frames(&a.frames)?;
        if let (None, Some(f)) = (&self.cli.sensor, frames.first()) {
            self.geometry = SensorGeometry::new(f.width, f.height)?;
        }
        let stream = self.read(&a.events)?;
        let out = kogtl_pipeline(&stream, &frames, &self.cfg.labeling)?;
        let path = self.write(&out.stream, &a.out)?;
        let mut s = String::from("frame_index,frame_t_us,events,edge_pixels,dx,dy,residual,iterations,converged\n");
        for b in &out.batches {
            match &b.icp {
                Some(r) => {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{}",
                        b.frame_index,
                        b.frame_t,
                        b.events,
                        b.edge_pixels,
                        fmt_value(r.dx),
                        fmt_value(r.dy),
                        fmt_value(r.residual),
                        r.iterations,
                        r.converged
                    );
                }
                None => {
                    let _ = writeln!(s, "{},{},{},{},nan,nan,nan,0,false", b.frame_index, b.frame_t, b.events, b.edge_pixels);
                }
            }
        }
        fs::write(self.out_path(Path::new("label_report.csv"))?, s)?;
        let real = out.stream.events().iter().filter(|e| e.label == Label::Real).count();
        println!(
            "labeled {} events ({} real, {} before the first frame) -> {}",
            out.stream.len(),
            real,
            out.pre_frame_events,
            path.display()
        );
        Ok(())
    }

    fn train(&mut self, a: &TrainArgs) -> Result<()> {
        let cfg = &self.cfg;
        let per_stream = cfg.per_class / a.events.len();
        let mut train_set: Vec<TrainingSample> = Vec::new();
        let mut test_set: Vec<TrainingSample> = Vec::new();
        for (i, path) in a.events.iter().enumerate() {
            let stream = self.read(path)?;
            let set = build_training_set(&stream, cfg.volume, per_stream, cfg.seed.wrapping_add(i as u64))?;
            let mut order: Vec<usize> = (0..set.samples.len()).collect();
            order.shuffle(&mut init_rng(cfg.seed.wrapping_add(1000 + i as u64)));
            let cut = (order.len() as f64 * cfg.train_split).round() as usize;
            train_set.extend(order[..cut].iter().map(|&j| set.samples[j].clone()));
            test_set.extend(order[cut..].iter().map(|&j| set.samples[j].clone()));
        }
        let mut model = DenoiseModel::new(cfg.volume, cfg.message.clone(), cfg.transformer, cfg.seed)?;
        let history = train(&mut model, &train_set, &cfg.train)?;
        let path = self.out_path(&a.out)?;
        model.save(&path)?;
        let mut s = String::from("# epoch mean_loss\n");
        for (e, l) in history.epoch_loss.iter().enumerate() {
            let _ = writeln!(s, "{} {}", e + 1, fmt_value(*l));
        }
        fs::write(self.out_path(Path::new("train_loss.dat"))?, s)?;
        let train_acc = evaluate(&model, &train_set)?;
        let test_acc = if test_set.is_empty() { f64::NAN } else { evaluate(&model, &test_set)? };
        println!(
            "trained {} parameters on {} graphs: train accuracy {}, test accuracy {} ({} graphs) -> {}",
            model.parameter_count(),
            train_set.len(),
            fmt_value(train_acc),
            fmt_value(test_acc),
            test_set.len(),
            path.display()
        );
        Ok(())
    }

    fn denoiser(&self, algo: &str, model: Option<&Path>) -> Result<Box<dyn Denoiser + Send>> {
        if algo == "gnnt" {
            let path = model.ok_or_else(|| Error::InvalidArgument("gnnt needs --model".into()))?;
            return Ok(Box::new(GnnFilter::new(&DenoiseModel::load(path)?, self.geometry)?));
        }
        Ok(build_filter(algo.parse::<FilterKind>()?, self.geometry, &self.cfg.filters))
    }

    fn filter(&mut self, a: &FilterArgs) -> Result<()> {
        let stream = self.read(&a.events)?;
        let decisions = if a.algo == "gnnt" {
            let path = a.model.as_deref().ok_or_else(|| Error::InvalidArgument("gnnt needs --model".into()))?;
            let model = DenoiseModel::load(path)?;
            let mode = match a.mode {
                ModeArg::Seq => PredictMode::Sequential,
                ModeArg::Batch => PredictMode::Batch,
            };
            let p = predict_stream(&model, &stream, mode)?;
            if !p.skipped.is_empty() {
                eprintln!("warning: {} events outside the sensor were classified noise", p.skipped.len());
            }
            p.decisions
        } else {
            let mut f = self.denoiser(&a.algo, None)?;
            match a.mode {
                ModeArg::Seq => run_filter(&stream, f.as_mut()),
                ModeArg::Batch => {
                    f.reset();
                    f.run_batch(stream.events())
                }
            }
        };
        let path = self.out_path(&a.out)?;
        write_decisions(&path, &stream, &decisions)?;
        let passed = decisions.iter().filter(|d| d.is_real()).count();
        println!("{}: {passed} of {} events classified real -> {}", a.algo, decisions.len(), path.display());
        Ok(())
    }

    fn eval(&mut self, a: &EvalArgs) -> Result<()> {
        let stream = self.read(&a.events)?;
        let decisions = read_decisions(&a.decisions, stream.len())?;
        let (events, preds) = known(&stream, &decisions);
        let counts = confusion(&preds, &events.iter().map(|e| e.label).collect::<Vec<_>>())?;
        let series = windowed_eval(stream.events(), &decisions, self.cfg.eval_window_us)?;
        let rows = [MetricsRow { name: a.name.clone(), counts }];
        let dir = self.cli.out_dir.clone();
        let written = report(&dir, &a.name, &rows, &[("series".to_string(), series)])?;
        self.outputs.extend(written);
        let m = metrics_from_counts(&counts);
        println!("{CONVENTION_NOTE}");
        println!(
            "tp={} fp={} tn={} fn={} accuracy={} sr={} nr={} snr={}",
            counts.tp,
            counts.fp,
            counts.tn,
            counts.fn_,
            fmt_value(m.accuracy),
            fmt_value(m.signal_ratio),
            fmt_value(m.noise_ratio),
            fmt_value(m.snr)
        );
        Ok(())
    }

    fn bench(&mut self, a: &BenchArgs) -> Result<()> {
        let stream = self.read(&a.events)?;
        let events = &stream.events()[..a.limit.unwrap_or(usize::MAX).min(stream.len())];
        let mut algos = a.algo.clone();
        if algos.is_empty() {
            algos = FilterKind::ALL.iter().map(|k| k.as_str().to_string()).collect();
            if a.model.is_some() {
                algos.push("gnnt".into());
            }
        }
        let mut rows = Vec::new();
        for algo in &algos {
            let mut f = self.denoiser(algo, a.model.as_deref())?;
            let (seq, batch) = compare_modes(f.as_mut(), events, &self.cfg.timing)?;
            println!(
                "{algo}: sequential {:.3e} s/event, batch {:.3e} s/event ({} events)",
                seq.mean_s, batch.mean_s, seq.events
            );
            rows.push((algo.clone(), seq));
            rows.push((algo.clone(), batch));
        }
        fs::write(self.out_path(&a.out)?, timing_csv(&rows))?;
        Ok(())
    }

    fn report(&mut self, a: &ReportArgs) -> Result<()> {
        let stream = self.read(&a.events)?;
        let mut rows = Vec::new();
        let mut series = Vec::new();
        for pair in &a.decisions {
            let (name, path) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("--decisions expects NAME=PATH, got `{pair}`")))?;
            let decisions = read_decisions(Path::new(path), stream.len())?;
            let (events, preds) = known(&stream, &decisions);
            let counts = confusion(&preds, &events.iter().map(|e| e.label).collect::<Vec<_>>())?;
            rows.push(MetricsRow { name: name.to_string(), counts });
            series.push((name.to_string(), windowed_eval(stream.events(), &decisions, self.cfg.eval_window_us)?));
        }
        let dir = self.cli.out_dir.clone();
        self.outputs.extend(report(&dir, &a.run_id, &rows, &series)?);
        let parameters = match &a.model {
            Some(p) => DenoiseModel::load(p)?.parameter_count(),
            None => 0,
        };
        let volume = match &a.model {
            Some(p) => DenoiseModel::load(p)?.volume,
            None => self.cfg.volume,
        };
        let m = memory_estimate(&volume, parameters, Some(self.geometry.pixel_count()));
        let mut s = String::from("key,value\n");
        let _ = writeln!(s, "window_pixels,{}", m.window_pixels);
        let _ = writeln!(s, "max_neighbors,{}", m.max_neighbors);
        let _ = writeln!(s, "elements,{}", m.elements);
        let _ = writeln!(s, "bytes,{}", m.bytes);
        let _ = writeln!(s, "comparison_elements,{}", m.comparison_elements);
        let _ = writeln!(s, "ratio,{}", fmt_value(m.ratio));
        let _ = writeln!(s, "parameters,{}", m.parameters);
        let _ = writeln!(s, "parameter_bytes,{}", m.parameter_bytes);
        let _ = writeln!(s, "store_bytes,{}", m.store_bytes.unwrap_or(0));
        fs::write(self.out_path(Path::new(&format!("{}_memory.csv", a.run_id)))?, s)?;
        print!("{CONVENTION_NOTE}\n{}", metrics_csv(&rows));
        Ok(())
    }
}

/// Events with known labels and their decisions.
fn known(stream: &EventStream, decisions: &[Decision]) -> (Vec<evdenoise::Event>, Vec<Decision>) {
    stream
        .events()
        .iter()
        .zip(decisions)
        .filter(|(e, _)| e.label.is_known())
        .map(|(e, d)| (*e, *d))
        .unzip()
}

fn write_decisions(path: &Path, stream: &EventStream, decisions: &[Decision]) -> Result<()> {
    let mut s = String::with_capacity(16 * decisions.len() + 32);
    s.push_str("index,t_us,decision\n");
    for (i, (e, d)) in stream.events().iter().zip(decisions).enumerate() {
        let _ = writeln!(s, "{i},{},{}", e.t, d.as_u8());
    }
    fs::write(path, s)?;
    Ok(())
}

fn read_decisions(path: &Path, expected: usize) -> Result<Vec<Decision>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::with_capacity(expected);
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Malformed { location: format!("{}:{}", path.display(), n + 1), message: line.to_string() };
        let d = match line.rsplit(',').next().map(str::trim) {
            Some("1") => Decision::Real,
            Some("0") => Decision::Noise,
            _ => return Err(bad()),
        };
        out.push(d);
    }
    if out.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "{} holds {} decisions for {expected} events",
            path.display(),
            out.len()
        )));
    }
    Ok(out)
}
