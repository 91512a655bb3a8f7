use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use eigeninfer::experiments::{reproduce, ReproduceConfig, TableId};
use eigeninfer::fluctuation::{q_matrix, FluctuationError};
use eigeninfer::inference::estimate::{
    estimate_with, select_order_stats, spiked_estimate_with, EstimateOptions, EstimateReport, NoiseLevel,
};
use eigeninfer::inference::report::{model_json, num, nums, with_config};
use eigeninfer::inference::testing::{test_statistic_at, TestReport};
use eigeninfer::inference::theta::{Param, ThetaVector};
use eigeninfer::inference::InferenceError;
use eigeninfer::lab::{
    fmt_f64, read_data_csv, read_trace_csv, sample_data, simulate_traces, split_count, write_data_csv, write_trace_csv,
    FieldMatrix, LabError, Rotation, SampleSpec, TraceStats,
};
use eigeninfer::moments::{MomentError, MomentSet, PopulationModel};
use eigeninfer::Field;

use crate::args::{
    Command, CovArgs, EstimateArgs, Format, ModelArgs, MomentsArgs, OrderArgs, OutputArgs, ReproduceArgs, SimulateArgs,
    SizeArgs, TestArgs,
};
use crate::CliError;

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<FluctuationError> for CliError {
    fn from(e: FluctuationError) -> Self {
        InferenceError::from(e).into()
    }
}

impl From<MomentError> for CliError {
    fn from(e: MomentError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub fn run(command: Command) -> CliResult<u8> {
    match command {
        Command::Moments(a) => moments(a),
        Command::Cov(a) => cov(a),
        Command::Test(a) => test(a),
        Command::Estimate(a) => estimate(a),
        Command::Order(a) => order(a),
        Command::Simulate(a) => simulate(a),
        Command::Reproduce(a) => reproduce_table(a),
    }
}

fn field(beta: Option<u8>) -> Field {
    beta.and_then(Field::from_beta).unwrap_or(Field::Real)
}

fn positive(name: &str, v: Option<usize>) -> CliResult<usize> {
    match v {
        Some(0) => Err(usage(format!("--{name} must be positive"))),
        Some(v) => Ok(v),
        None => Err(usage(format!("--{name} is required"))),
    }
}

fn parse_f64(s: &str) -> CliResult<f64> {
    s.trim().parse::<f64>().map_err(|_| usage(format!("invalid number {s:?}")))
}

/// A value with an optional trailing `?` free marker.
fn parse_marked(s: &str) -> CliResult<(f64, bool)> {
    let s = s.trim();
    match s.strip_suffix('?') {
        Some(v) => Ok((parse_f64(v)?, true)),
        None => Ok((parse_f64(s)?, false)),
    }
}

struct BlockSpec {
    a: (f64, bool),
    t: (f64, bool),
}

fn parse_blocks(spec: &str) -> CliResult<Vec<BlockSpec>> {
    spec.split(',')
        .map(|b| {
            let (a, t) = b.split_once(':').ok_or_else(|| usage(format!("block {b:?} must be a:t")))?;
            Ok(BlockSpec { a: parse_marked(a)?, t: parse_marked(t)? })
        })
        .collect()
}

fn parse_spike(spec: &str) -> CliResult<(f64, usize)> {
    let mut parts = spec.split(',');
    let a = parse_f64(parts.next().unwrap_or_default())?;
    let count = match parts.next() {
        Some(c) => c
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| usage(format!("invalid spike count {c:?}")))?,
        None => 1,
    };
    if parts.next().is_some() {
        return Err(usage("--spike takes a[,count]"));
    }
    Ok((a, count))
}

fn known_lambda(args: &ModelArgs) -> CliResult<f64> {
    let l = parse_f64(&args.lambda)?;
    if l > 0.0 {
        Ok(l)
    } else {
        Err(usage("--lambda must be positive"))
    }
}

/// The population model named by `--model` or `--spike`; spikes need `p`.
fn model(args: &ModelArgs, p: Option<usize>) -> CliResult<Option<PopulationModel>> {
    if let Some(spec) = &args.model {
        let pairs: Vec<(f64, f64)> = parse_blocks(spec)?.iter().map(|b| (b.a.0, b.t.0)).collect();
        return Ok(Some(PopulationModel::from_pairs(&pairs)?));
    }
    if let Some(spec) = &args.spike {
        let (a, count) = parse_spike(spec)?;
        let p = positive("p", p)?;
        return Ok(Some(PopulationModel::spiked(&vec![a; count], known_lambda(args)?, p)?));
    }
    Ok(None)
}

/// Free/fixed template from `--model`; without any `?` every value is free.
fn template(spec: &str) -> CliResult<ThetaVector> {
    let blocks = parse_blocks(spec)?;
    let any_marked = blocks.iter().any(|b| b.a.1 || b.t.1);
    let param = |(v, free): (f64, bool)| if free || !any_marked { Param::Free(v) } else { Param::Fixed(v) };
    let k = blocks.len();
    let masses = blocks[..k - 1].iter().map(|b| param(b.t)).collect();
    let magnitudes = blocks.iter().map(|b| param(b.a)).collect();
    Ok(ThetaVector::new(masses, magnitudes)?)
}

enum Input {
    Traces(Vec<TraceStats>),
    Data(FieldMatrix),
}

fn load_input(path: &Path) -> CliResult<Input> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#')).unwrap_or_default();
    if first.starts_with("trial,") {
        let rows = read_trace_csv(text.as_bytes())?;
        if rows.is_empty() {
            return Err(usage(format!("{}: no trace rows", path.display())));
        }
        Ok(Input::Traces(rows))
    } else {
        Ok(Input::Data(read_data_csv(text.as_bytes())?))
    }
}

fn override_field(stats: &mut TraceStats, beta: Option<u8>) {
    if let Some(f) = beta.and_then(Field::from_beta) {
        stats.field = f;
    }
}

fn writer(out: &OutputArgs) -> CliResult<Box<dyn Write>> {
    Ok(match &out.out {
        Some(path) => {
            Box::new(BufWriter::new(File::create(path).map_err(|e| usage(format!("{}: {e}", path.display())))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn output_config(out: &OutputArgs, format: Format) -> Value {
    json!({
        "format": match format { Format::Csv => "csv", Format::Json => "json" },
        "out": out.out.as_ref().map(|p| p.display().to_string()),
    })
}

/// Writes either the CSV body (after a `# config` comment) or the JSON value
/// with the config embedded.
fn emit(
    out: &OutputArgs,
    default: Format,
    mut config: Value,
    json_body: Value,
    csv_body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> CliResult<()> {
    let format = out.format.unwrap_or(default);
    config["output"] = output_config(out, format);
    let mut w = writer(out)?;
    match format {
        Format::Json => {
            let v = with_config(json_body, config);
            writeln!(w, "{}", serde_json::to_string_pretty(&v).expect("serializable"))?;
        }
        Format::Csv => {
            writeln!(w, "# config {}", config)?;
            csv_body(&mut *w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn model_config(args: &ModelArgs) -> Value {
    json!({ "model": args.model, "spike": args.spike, "lambda": args.lambda })
}

fn size_config(size: &SizeArgs) -> Value {
    json!({ "p": size.p, "n": size.n, "beta": field(size.beta).beta() })
}

fn moments(a: MomentsArgs) -> CliResult<u8> {
    if a.order == 0 {
        return Err(usage("--order must be at least 1"));
    }
    let c = match (a.c, a.size.p, a.size.n) {
        (Some(c), _, _) => c,
        (None, Some(p), Some(n)) if n > 0 => p as f64 / n as f64,
        _ => return Err(usage("give --c or both --p and --n")),
    };
    let m = model(&a.model, a.size.p)?.ok_or_else(|| usage("--model or --spike is required"))?;
    let set = MomentSet::new(&m, c, a.order)?;
    let config = json!({ "command": "moments", "model": model_config(&a.model), "size": size_config(&a.size), "c": num(c), "order": a.order });
    let body = json!({
        "kind": "moments",
        "theta": model_json(&m),
        "alpha_sigma": nums(&set.alpha_sigma),
        "alpha_s": nums(&set.alpha_s),
        "alpha_stilde": nums(&set.alpha_stilde),
    });
    emit(&a.output, Format::Csv, config, body, |w| {
        writeln!(w, "j,alpha_sigma,alpha_s,alpha_stilde")?;
        for j in 0..a.order {
            writeln!(
                w,
                "{},{},{},{}",
                j + 1,
                fmt_f64(set.alpha_sigma[j]),
                fmt_f64(set.alpha_s[j]),
                fmt_f64(set.alpha_stilde[j])
            )?;
        }
        Ok(())
    })?;
    Ok(0)
}

fn cov(a: CovArgs) -> CliResult<u8> {
    let p = positive("p", a.size.p)?;
    let n = positive("n", a.size.n)?;
    let f = field(a.size.beta);
    let m = model(&a.model, Some(p))?.ok_or_else(|| usage("--model or --spike is required"))?;
    let q = q_matrix(&m, p, n, a.q, f)?;
    let rows: Vec<Value> = q.matrix().row_iter().map(|r| nums(&r.iter().copied().collect::<Vec<_>>())).collect();
    let config = json!({ "command": "cov", "model": model_config(&a.model), "size": size_config(&a.size), "q": a.q });
    let body = json!({ "kind": "cov", "theta": model_json(&m), "matrix": rows });
    emit(&a.output, Format::Csv, config, body, |w| {
        for r in q.matrix().row_iter() {
            let cells: Vec<String> = r.iter().map(|x| fmt_f64(*x)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })?;
    Ok(0)
}

fn report_csv_header(w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "row,kind,statistic,dof,p_value,threshold,decision")
}

fn report_csv_row(w: &mut dyn Write, row: usize, r: &TestReport) -> io::Result<()> {
    writeln!(
        w,
        "{row},{},{},{},{},{},{}",
        r.kind,
        fmt_f64(r.statistic),
        r.dof,
        fmt_f64(r.p_value),
        fmt_f64(r.threshold),
        r.decision.as_str()
    )
}

fn test(a: TestArgs) -> CliResult<u8> {
    let mut rows = match load_input(&a.input)? {
        Input::Traces(rows) => rows,
        Input::Data(x) => vec![TraceStats::from_data(&x, x.ncols(), a.q)?],
    };
    let mut reports = Vec::with_capacity(rows.len());
    for stats in rows.iter_mut() {
        override_field(stats, a.beta);
        let report = match model(&a.model, Some(stats.p))? {
            Some(m) => test_statistic_at(&m, stats, a.q, a.level)?,
            None => {
                let mut r = test_statistic_at(&PopulationModel::identity(), stats, a.q, a.level)?;
                r.kind = "sphericity";
                r
            }
        };
        reports.push(report);
    }
    let config = json!({
        "command": "test",
        "input": a.input.display().to_string(),
        "model": model_config(&a.model),
        "q": a.q,
        "level": num(a.level),
        "beta": a.beta,
    });
    let body = if reports.len() == 1 {
        reports[0].to_json()
    } else {
        Value::Array(reports.iter().map(TestReport::to_json).collect())
    };
    emit(&a.output, Format::Json, config, body, |w| {
        report_csv_header(w)?;
        reports.iter().enumerate().try_for_each(|(i, r)| report_csv_row(w, i, r))
    })?;
    Ok(if reports.iter().all(TestReport::accepted) { 0 } else { 1 })
}

fn estimate_csv(w: &mut dyn Write, r: &EstimateReport) -> io::Result<()> {
    writeln!(w, "block,a,a_free,t,t_free,objective,q,converged")?;
    let model = r.model();
    let k = r.theta_hat.k();
    for (i, b) in model.blocks().iter().enumerate() {
        let a_free = r.theta_hat.magnitudes()[i].is_free();
        let t_free = i + 1 < k && r.theta_hat.masses()[i].is_free();
        writeln!(
            w,
            "{},{},{a_free},{},{t_free},{},{},{}",
            i + 1,
            fmt_f64(b.magnitude),
            fmt_f64(b.mass),
            fmt_f64(r.objective),
            r.q,
            r.converged
        )?;
    }
    Ok(())
}

fn estimate(a: EstimateArgs) -> CliResult<u8> {
    let input = load_input(&a.input)?;
    let opts = EstimateOptions { restarts: a.restarts.max(1), seed: a.seed, ..EstimateOptions::default() };

    enum Plan {
        Template(ThetaVector),
        Spiked(usize, NoiseLevel),
    }
    let plan = if let Some(k) = a.blocks {
        if k == 0 {
            return Err(usage("--blocks must be positive"));
        }
        Plan::Template(ThetaVector::free_blocks(k))
    } else if let Some(spec) = &a.model.model {
        Plan::Template(template(spec)?)
    } else if let Some(spec) = &a.model.spike {
        let (_, count) = parse_spike(spec)?;
        let lambda =
            if a.model.lambda.trim() == "free" { NoiseLevel::Free } else { NoiseLevel::Known(known_lambda(&a.model)?) };
        Plan::Spiked(count, lambda)
    } else {
        return Err(usage("give --model, --spike or --blocks"));
    };
    let q = match &plan {
        Plan::Template(t) => a.q.unwrap_or(t.min_q()),
        Plan::Spiked(count, lambda) => count + matches!(lambda, NoiseLevel::Free) as usize + 1,
    };
    let q_traces = q.max(a.test.unwrap_or(0));
    let (mut full, split) = match &input {
        Input::Traces(rows) => {
            if a.test.is_some() {
                return Err(usage("--test needs raw data input"));
            }
            if rows.len() > 1 {
                eprintln!("using the first of {} trace rows", rows.len());
            }
            (rows[0].clone(), None)
        }
        Input::Data(x) => {
            let full = TraceStats::from_data(x, x.ncols(), q_traces)?;
            let split = match a.test {
                Some(qt) if x.ncols() < 2 => return Err(usage(format!("--test {qt} needs at least two samples"))),
                Some(qt) => Some(TraceStats::from_data(x, split_count(x.ncols()), qt)?),
                None => None,
            };
            (full, split)
        }
    };
    override_field(&mut full, a.beta);
    let result = match &plan {
        Plan::Template(t) => estimate_with(&full, t, q, &opts),
        Plan::Spiked(count, lambda) => spiked_estimate_with(&full, *lambda, *count, &opts),
    };
    let (report, converged) = match result {
        Ok(r) => (r, true),
        Err(InferenceError::NotConverged(r)) => (*r, false),
        Err(e) => return Err(e.into()),
    };
    let test = match (split, a.test) {
        (Some(mut split), Some(qt)) => {
            override_field(&mut split, a.beta);
            let mut t = test_statistic_at(&report.model(), &split, qt, 0.95)?;
            t.kind = "estimate-then-test";
            Some(t)
        }
        _ => None,
    };
    let config = json!({
        "command": "estimate",
        "input": a.input.display().to_string(),
        "model": model_config(&a.model),
        "blocks": a.blocks,
        "q": q,
        "test": a.test,
        "restarts": opts.restarts,
        "seed": a.seed,
        "beta": full.field.beta(),
    });
    let body = match &test {
        Some(t) => json!({ "kind": "estimate-then-test", "estimate": report.to_json(), "test": t.to_json() }),
        None => report.to_json(),
    };
    emit(&a.output, Format::Json, config, body, |w| {
        estimate_csv(w, &report)?;
        if let Some(t) = &test {
            report_csv_header(w)?;
            report_csv_row(w, 0, t)?;
        }
        Ok(())
    })?;
    if !converged {
        return Err(CliError::Numeric("optimizer budget exhausted; reported the best point found".into()));
    }
    Ok(match test {
        Some(t) if !t.accepted() => 1,
        _ => 0,
    })
}

fn order(a: OrderArgs) -> CliResult<u8> {
    if a.k_max == 0 {
        return Err(usage("--k-max must be at least 1"));
    }
    let x = match load_input(&a.input)? {
        Input::Data(x) => x,
        Input::Traces(_) => return Err(usage("order selection needs raw data input")),
    };
    if x.ncols() < 2 {
        return Err(usage("order selection needs at least two samples"));
    }
    let q = 2 * a.k_max;
    let mut full = TraceStats::from_data(&x, x.ncols(), q)?;
    let mut split = TraceStats::from_data(&x, split_count(x.ncols()), q)?;
    override_field(&mut full, a.beta);
    override_field(&mut split, a.beta);
    let opts = EstimateOptions { restarts: a.restarts.max(1), seed: a.seed, ..EstimateOptions::default() };
    let report = select_order_stats(&full, &split, a.k_max, &opts)?;
    let config = json!({
        "command": "order",
        "input": a.input.display().to_string(),
        "k_max": a.k_max,
        "restarts": opts.restarts,
        "seed": a.seed,
        "beta": full.field.beta(),
    });
    emit(&a.output, Format::Json, config, report.to_json(), |w| {
        writeln!(w, "k,criterion,selected")?;
        for (i, c) in report.criteria.iter().enumerate() {
            writeln!(w, "{},{},{}", i + 1, fmt_f64(*c), i + 1 == report.k_hat)?;
        }
        estimate_csv(w, &report.estimate)
    })?;
    Ok(0)
}

fn simulate(a: SimulateArgs) -> CliResult<u8> {
    let p = positive("p", a.size.p)?;
    let n = positive("n", a.size.n)?;
    if a.q == 0 {
        return Err(usage("--q must be at least 1"));
    }
    let m = model(&a.model, Some(p))?.unwrap_or_else(PopulationModel::identity);
    let rotation = if a.haar { Rotation::Haar } else { Rotation::Identity };
    let spec = SampleSpec::new(p, n, field(a.size.beta), a.seed).with_rotation(rotation);
    let config = json!({
        "command": "simulate",
        "model": model_config(&a.model),
        "size": size_config(&a.size),
        "q": a.q,
        "trials": a.trials,
        "seed": a.seed,
        "haar": a.haar,
        "raw": a.raw,
    });
    if let Some(trial) = a.raw {
        if a.output.format == Some(Format::Json) {
            return Err(usage("--raw writes CSV only"));
        }
        let x = sample_data(&m, &spec, trial);
        emit(&a.output, Format::Csv, config, Value::Null, |w| write_data_csv(w, &x))?;
        return Ok(0);
    }
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    eprintln!("simulating {} trials at p = {p}, n = {n}", a.trials);
    let rows = simulate_traces(&m, &spec, a.trials, a.q);
    let body = json!({
        "kind": "simulate",
        "theta": model_json(&m),
        "rows": rows.iter().enumerate().map(|(i, r)| json!({ "trial": i, "traces": nums(&r.trace_powers) })).collect::<Vec<_>>(),
    });
    emit(&a.output, Format::Csv, config, body, |w| write_trace_csv(w, a.seed, &rows))?;
    Ok(0)
}

fn reproduce_table(a: ReproduceArgs) -> CliResult<u8> {
    let id = TableId::from_number(a.table)
        .ok_or_else(|| usage(format!("unsupported table {}; choose 2, 4, 5, 6, 7, 8, 9 or 10", a.table)))?;
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let cfg = ReproduceConfig {
        trials: a.trials,
        seed: a.seed,
        p: a.p,
        n: a.n,
        field: a.beta.and_then(Field::from_beta),
        k_max: a.k_max.max(1),
    };
    eprintln!("table {id}: {} trials per cell", cfg.trials);
    let table = reproduce(id, &cfg);
    if table.rows.is_empty() {
        return Err(usage("no table rows match --p/--n"));
    }
    eprintln!("table {id}: {} rows done", table.rows.len());
    let config = json!({
        "command": "reproduce",
        "table": a.table,
        "trials": a.trials,
        "seed": a.seed,
        "p": a.p,
        "n": a.n,
        "beta": a.beta,
        "k_max": cfg.k_max,
    });
    emit(&a.output, Format::Csv, config, table.to_json(), |w| table.write_csv(w))?;
    Ok(0)
}
