use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ultradiff::heat::{
    convergence_study, heat_kernel, kernel_swap_bound, semigroup, truncation_bound, BoundReport, Projection,
};
use ultradiff::multitopo::{decode, encode, FamilyFile, GraphFile, WeightedMultiGraph};
use ultradiff::operators::{generator, Bullet, KernelSpec, Measure};
use ultradiff::padic::{discretize, embed, embed_with_prime, AssignmentRecord, DiscAssignment, Discretization};
use ultradiff::spectra::{full_basis, gram_error, projector_error, EigenBasis, PairKind};
use ultradiff::toposort::{is_linear_extension, parallel_toposort, Dag};
use ultradiff::ultraindex::{
    build_dendrogram, graph_distances, subdominant_ultrametric, Dendrogram, DendrogramRecord, DistanceMatrix,
    UltrametricMatrix,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{digits_label, float, matrix_text, read_json, to_json, Artifact};

/// Persisted index: the dendrogram and its disc assignment.
#[derive(Debug, Serialize, Deserialize)]
pub struct IndexFile {
    pub dendrogram: DendrogramRecord,
    pub assignment: AssignmentRecord,
}

/// Input of `toposort`: one DAG over labelled vertices.
#[derive(Debug, Deserialize)]
pub struct DagFile {
    pub vertices: Vec<String>,
    pub edges: Vec<(String, String)>,
}

/// A graph file carried through distances, index and embedding.
pub struct Model {
    pub labels: Vec<String>,
    pub graph: WeightedMultiGraph,
    pub lengths: Vec<(usize, usize, f64)>,
    pub graph_metric: DistanceMatrix,
    pub ultrametric: UltrametricMatrix,
    pub dendrogram: Dendrogram,
    pub assign: DiscAssignment,
}

pub fn load_model(path: &Path, prime: Option<u64>) -> Result<Model, CliError> {
    let file: GraphFile = read_json(path)?;
    let graph = file.to_graph()?;
    let lengths = file.distance_edges()?;
    let graph_metric = graph_distances(graph.vertex_count(), &lengths)?;
    let ultrametric = subdominant_ultrametric(&graph_metric);
    let dendrogram = build_dendrogram(&ultrametric)?;
    let assign = match prime {
        Some(p) => embed_with_prime(&dendrogram, p)?,
        None => embed(&dendrogram),
    };
    Ok(Model {
        labels: file.vertices.clone(),
        graph,
        lengths,
        graph_metric,
        ultrametric,
        dendrogram,
        assign,
    })
}

impl Model {
    /// Kernel source for a bullet; adjacency uses the edge lengths as `kappa`.
    pub fn kernel(&self, bullet: Bullet, alpha: f64) -> Result<KernelSpec, CliError> {
        Ok(match bullet {
            Bullet::Adjacency => {
                let n = self.graph.vertex_count();
                let mut kappa = vec![vec![0.0; n]; n];
                for &(u, v, len) in &self.lengths {
                    kappa[u][v] = len;
                    kappa[v][u] = len;
                }
                KernelSpec::adjacency(&kappa, alpha)?
            }
            Bullet::GraphDistance => KernelSpec::graph_distance(&self.graph_metric, alpha)?,
            Bullet::Ultrametric => KernelSpec::ultrametric(&self.ultrametric, alpha)?,
        })
    }

    pub fn level(&self, cfg: &RunConfig) -> usize {
        cfg.level.unwrap_or(self.assign.m() + 1)
    }

    fn header(&self, cfg: &RunConfig, n: usize, bullet: Bullet, measure: Measure) -> String {
        format!(
            "p={} m={} n={} bullet={} alpha={} measure={}",
            self.assign.p(),
            self.assign.m(),
            n,
            bullet,
            float(cfg.alpha),
            measure
        )
    }
}

fn parse_primes(list: &str) -> Result<Vec<u64>, CliError> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| CliError::parse(format!("bad prime {s:?}: {e}")))
        })
        .collect()
}

pub fn run_encode(input: &Path, output: Option<PathBuf>, primes: Option<&str>) -> Result<Vec<Artifact>, CliError> {
    let mut file: FamilyFile = read_json(input)?;
    if let Some(list) = primes {
        file.primes = Some(parse_primes(list)?);
    }
    let family = file.to_family()?;
    let g = encode(&family)?;
    let out = GraphFile::from_graph(&g, family.primes());
    Ok(vec![Artifact::new(output, to_json(&out))
        .metric("vertices", g.vertex_count())
        .metric("edges", g.weights().len())
        .metric("topologies", family.len())])
}

pub fn run_decode(input: &Path, output: Option<PathBuf>, primes: Option<&str>) -> Result<Vec<Artifact>, CliError> {
    let file: GraphFile = read_json(input)?;
    let primes = match primes {
        Some(list) => parse_primes(list)?,
        None => file.primes.clone(),
    };
    let family = decode(&file.to_graph()?, &primes)?;
    let edges: usize = family.dags().iter().map(|d| d.len()).sum();
    Ok(vec![Artifact::new(output, to_json(&FamilyFile::from_family(&family)))
        .metric("vertices", family.vertices().len())
        .metric("topologies", family.len())
        .metric("dag_edges", edges)])
}

pub fn run_index(input: &Path, output: Option<PathBuf>, cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let model = load_model(input, cfg.prime)?;
    let index = IndexFile {
        dendrogram: model.dendrogram.to_record(&model.labels),
        assignment: model.assign.to_record(&model.labels),
    };
    Ok(vec![Artifact::new(output, to_json(&index))
        .metric("vertices", model.labels.len())
        .metric("max_level", model.dendrogram.max_level())
        .metric("max_branching", model.dendrogram.max_branching())
        .metric("p", model.assign.p())
        .metric("m", model.assign.m())])
}

fn trivial_dendrogram(n: usize) -> Result<Dendrogram, CliError> {
    let d = DistanceMatrix::from_fn(n, |a, b| if a == b { 0.0 } else { 1.0 })?;
    Ok(build_dendrogram(&UltrametricMatrix::new(d)?)?)
}

pub fn run_toposort(
    input: &Path,
    index: Option<&Path>,
    output: Option<PathBuf>,
    cfg: &RunConfig,
) -> Result<Vec<Artifact>, CliError> {
    let file: DagFile = read_json(input)?;
    let position: HashMap<&str, usize> = file
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();
    if position.len() != file.vertices.len() {
        return Err(CliError::parse("duplicate vertex label in DAG file"));
    }
    let lookup = |s: &str| {
        position
            .get(s)
            .copied()
            .ok_or_else(|| CliError::parse(format!("unknown vertex {s:?}")))
    };
    let edges = file
        .edges
        .iter()
        .map(|(a, b)| Ok((lookup(a)?, lookup(b)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let dag = Dag::new(file.vertices.len(), edges)?;
    let dendrogram = match index {
        Some(path) => {
            let idx: IndexFile = read_json(path)?;
            Dendrogram::from_record(&idx.dendrogram, &file.vertices)?
        }
        None => trivial_dendrogram(file.vertices.len())?,
    };
    let seeds = match &cfg.seeds {
        Some(labels) => labels.iter().map(|s| lookup(s)).collect::<Result<Vec<_>, _>>()?,
        None => (0..file.vertices.len()).collect(),
    };
    let order = parallel_toposort(&dag, &dendrogram, &seeds, cfg.parallelism)?;
    let valid = is_linear_extension(&dag, &order);
    let mut content = String::new();
    for &v in &order {
        content.push_str(&file.vertices[v]);
        content.push('\n');
    }
    writeln!(content, "# valid linear extension: {valid}").expect("string write");
    Ok(vec![Artifact::new(output, content)
        .metric("vertices", order.len())
        .metric("edges", dag.edges().len())
        .metric("seeds", seeds.len())
        .metric("parallelism", cfg.parallelism)
        .metric("valid", valid)])
}

fn support_label(kind: &PairKind) -> (String, String, String) {
    match kind {
        PairKind::Kozyrev { ball, j, .. } => ("kozyrev".into(), digits_label(ball), j.to_string()),
        PairKind::Ultrametric { node, k } => ("ultrametric".into(), format!("node{node}"), k.to_string()),
        PairKind::Block { index } => ("block".into(), "-".into(), index.to_string()),
        PairKind::Constant => ("constant".into(), "-".into(), "0".into()),
    }
}

fn spectrum_table(header: &str, basis: &EigenBasis) -> String {
    let mut out = format!("# {header}\nkind\tsupport\tindex\tlambda\tresidual\n");
    for pair in &basis.pairs {
        let (kind, support, index) = support_label(&pair.kind);
        writeln!(
            out,
            "{kind}\t{support}\t{index}\t{}\t{}",
            float(pair.lambda),
            float(pair.residual)
        )
        .expect("string write");
    }
    out
}

fn cells_line(disc: &Discretization) -> String {
    let labels: Vec<String> = disc.cells().iter().map(|c| digits_label(&c.cell.digits)).collect();
    format!("cells {}", labels.join(" "))
}

pub fn run_spectrum(
    input: &Path,
    output: Option<PathBuf>,
    matrix: Option<PathBuf>,
    cfg: &RunConfig,
) -> Result<Vec<Artifact>, CliError> {
    let model = load_model(input, cfg.prime)?;
    let spec = model.kernel(cfg.bullet, cfg.alpha)?;
    let n = model.level(cfg);
    let disc = discretize(&model.assign, n)?;
    let basis = full_basis(&spec, &model.assign, &disc, cfg.measure)?;
    let header = model.header(cfg, n, cfg.bullet, cfg.measure);
    let lambdas = basis.pairs.iter().map(|p| p.lambda);
    let lambda_min = lambdas.clone().fold(f64::INFINITY, f64::min);
    let lambda_max = lambdas.fold(f64::NEG_INFINITY, f64::max);
    let mut artifacts = vec![Artifact::new(output, spectrum_table(&header, &basis))
        .metric("cells", disc.len())
        .metric("pairs", basis.len())
        .metric("max_residual", basis.max_residual())
        .metric("gram_error", gram_error(&basis))
        .metric("projector_error", projector_error(&basis))
        .metric("lambda_min", lambda_min)
        .metric("lambda_max", lambda_max)];
    if let Some(path) = matrix {
        let a = generator(&spec, &model.assign, &disc, cfg.measure)?;
        let text = matrix_text(&[header, cells_line(&disc)], a.matrix());
        artifacts.push(Artifact::new(Some(path), text).metric("rows", a.len()));
    }
    Ok(artifacts)
}

pub fn run_heat(input: &Path, output: Option<PathBuf>, cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let model = load_model(input, cfg.prime)?;
    let spec = model.kernel(cfg.bullet, cfg.alpha)?;
    let n = model.level(cfg);
    let disc = discretize(&model.assign, n)?;
    let basis = full_basis(&spec, &model.assign, &disc, cfg.measure)?;
    let kernel = heat_kernel(&basis, cfg.t)?;
    let transition = kernel.transition(&basis.weights);
    let exact = semigroup(&generator(&spec, &model.assign, &disc, cfg.measure)?, cfg.t)?;
    let route_gap = (&transition - &exact.matrix).amax();
    let weights: Vec<String> = basis.weights.iter().map(|&w| float(w)).collect();
    let header = vec![
        format!("heat kernel p(t,x,y) t={} {}", float(cfg.t), model.header(cfg, n, cfg.bullet, cfg.measure)),
        cells_line(&disc),
        format!("weights {}", weights.join(" ")),
    ];
    Ok(vec![Artifact::new(output, matrix_text(&header, &kernel.kernel))
        .metric("t", cfg.t)
        .metric("cells", disc.len())
        .metric("route_gap", route_gap)
        .metric("row_sum_error", exact.row_sum_error())
        .metric("min_entry", exact.min_entry())
        .metric("imaginary_residue", kernel.imaginary_residue)])
}

fn report_text(title: &str, labels: &[String], report: &BoundReport) -> String {
    let mut out = format!("# {title}\nkey\tvalue\n");
    for (key, value) in [
        ("measured_sup_error", report.measured_sup_error),
        ("theoretical_bound", report.theoretical_bound),
        ("statement_bound", report.statement_bound),
        ("filler_volume", report.filler_volume),
        ("max_rate", report.max_rate),
        ("slack", report.slack),
    ] {
        writeln!(out, "{key}\t{}", float(value)).expect("string write");
    }
    out.push_str("# constants\nw\tv\tc\n");
    for c in &report.constants {
        writeln!(out, "{}\t{}\t{}", labels[c.w], labels[c.v], float(c.c)).expect("string write");
    }
    out.push_str("# volumes\nvertex\tvolume\n");
    for (label, vol) in labels.iter().zip(&report.volumes) {
        writeln!(out, "{label}\t{}", float(*vol)).expect("string write");
    }
    out.push_str("# samples\nt\tmeasured\tbound\n");
    for s in &report.samples {
        writeln!(out, "{}\t{}\t{}", float(s.t), float(s.measured), float(s.bound)).expect("string write");
    }
    out
}

fn report_artifact(output: Option<PathBuf>, text: String, report: &BoundReport) -> Artifact {
    Artifact::new(output, text)
        .metric("measured_sup_error", report.measured_sup_error)
        .metric("theoretical_bound", report.theoretical_bound)
        .metric("statement_bound", report.statement_bound)
        .metric("slack", report.slack)
}

pub fn parse_swap(pair: &str) -> Result<(Bullet, Bullet), CliError> {
    let parts: Vec<&str> = pair.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok((a.parse().map_err(CliError::Parse)?, b.parse().map_err(CliError::Parse)?)),
        _ => Err(CliError::parse(format!("--swap expects two bullets 'a,b', got {pair:?}"))),
    }
}

pub fn run_bounds(
    input: &Path,
    output: Option<PathBuf>,
    swap: Option<(Bullet, Bullet)>,
    cfg: &RunConfig,
) -> Result<Vec<Artifact>, CliError> {
    let model = load_model(input, cfg.prime)?;
    let n = model.level(cfg);
    if let Some((a, b)) = swap {
        let (ka, kb) = (model.kernel(a, cfg.alpha)?, model.kernel(b, cfg.alpha)?);
        let report = kernel_swap_bound(&ka, &kb, &model.assign, n, cfg.measure, cfg.t)?;
        let title = format!(
            "kernel swap {a},{b} t={} {}",
            float(cfg.t),
            model.header(cfg, n, a, cfg.measure)
        );
        return Ok(vec![report_artifact(output, report_text(&title, &model.labels, &report), &report)]);
    }
    let cut = cfg
        .truncate
        .ok_or_else(|| CliError::parse("bounds needs --truncate L or --swap a,b"))?;
    let spec = model.kernel(cfg.bullet, cfg.alpha)?;
    let disc = discretize(&model.assign, n)?;
    let u = vec![1.0; disc.len()];
    let report = truncation_bound(&spec, &model.assign, cut, n, cfg.t, &u)?;
    let title = format!(
        "truncation cut={cut} t_max={} {}",
        float(cfg.t),
        model.header(cfg, n, cfg.bullet, Measure::Haar)
    );
    Ok(vec![report_artifact(output, report_text(&title, &model.labels, &report), &report)
        .metric("cut", cut)])
}

/// Default initial datum: vertex index plus geometrically damped digits.
fn default_datum(assign: &DiscAssignment, fine: &Discretization) -> Vec<f64> {
    let m = assign.m();
    let spread = (assign.p() - 1) as f64;
    fine.cells()
        .iter()
        .map(|c| {
            let base = c.vertex.map_or(0.0, |v| v as f64);
            c.cell.digits[m..]
                .iter()
                .enumerate()
                .map(|(k, &d)| f64::from(d) / spread * 0.5f64.powi(k as i32))
                .sum::<f64>()
                + base
        })
        .collect()
}

pub fn run_converge(input: &Path, output: Option<PathBuf>, cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let model = load_model(input, cfg.prime)?;
    let spec = model.kernel(cfg.bullet, cfg.alpha)?;
    let m = model.assign.m();
    let reference = cfg.reference.unwrap_or(m + 5);
    let fine = discretize(&model.assign, reference)?;
    let u0 = default_datum(&model.assign, &fine);
    let levels: Vec<usize> = (m + 1..=reference).collect();
    let rows = convergence_study(&spec, &model.assign, cfg.measure, reference, &u0, &levels, cfg.t, cfg.projection)?;
    let projection = match cfg.projection {
        Projection::Sample => "sample",
        Projection::Average => "average",
    };
    let mut out = format!(
        "# convergence reference={reference} tau={} projection={projection} {}\nn\tsup_gap\n",
        float(cfg.t),
        model.header(cfg, reference, cfg.bullet, cfg.measure)
    );
    for row in &rows {
        writeln!(out, "{}\t{}", row.n, float(row.sup_gap)).expect("string write");
    }
    let monotone = rows.windows(2).all(|w| w[1].sup_gap <= w[0].sup_gap + 1e-12);
    let last = rows.last().map_or(0.0, |r| r.sup_gap);
    Ok(vec![Artifact::new(output, out)
        .metric("reference", reference)
        .metric("levels", rows.len())
        .metric("final_gap", last)
        .metric("monotone", monotone)])
}
