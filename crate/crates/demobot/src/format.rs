//! On-disk formats: the line-oriented dataset file, the model file, and the
//! pairwise distance matrix.
//!
//! A dataset file is one JSON header line followed by one JSON record per step,
//! ordered by trajectory id and then timestep. Reals are written in shortest
//! round-trip decimal form, so a save/load cycle is bit-exact.

use crate::error::{Error, Result};
use demobot_core::policy::GcbcModel;
use demobot_core::reachability::{GraphNode, StateGraph, ValueTable};
use demobot_core::{ActionId, DemoDataset, DemoTrajectory, FeatureVector, GroundMetric, Step, TrajId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const DATASET_FORMAT: &str = "demobot-dataset";
pub const MODEL_FORMAT: &str = "demobot-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub feature_dim: usize,
    pub action_count: usize,
    pub trajectories: usize,
    pub steps: usize,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub traj_id: u32,
    pub t: u32,
    pub task: String,
    pub action: u32,
    pub feature: Vec<f64>,
}

pub fn write_dataset<W: Write>(dataset: &DemoDataset, mut w: W) -> std::io::Result<()> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: FORMAT_VERSION,
        feature_dim: dataset.feature_dim(),
        action_count: dataset.action_count(),
        trajectories: dataset.trajectories().len(),
        steps: dataset.total_steps(),
        meta: dataset.meta.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for traj in dataset.trajectories() {
        for s in traj.steps() {
            let rec = StepRecord {
                traj_id: s.traj_id.0,
                t: s.t,
                task: traj.task_tag().into(),
                action: s.action.index() as u32,
                feature: s.feature.as_slice().to_vec(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()
}

/// Parses a dataset file; `path` is used only in error messages.
pub fn read_dataset<R: BufRead>(r: R, path: &Path) -> Result<DemoDataset> {
    let parse = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = r.lines().enumerate();
    let header: DatasetHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| parse(1, format!("bad header: {e}")))?
        }
        None => return Err(parse(1, "missing header".into())),
    };
    if header.format != DATASET_FORMAT || header.version != FORMAT_VERSION {
        return Err(parse(
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    if header.action_count != ActionId::COUNT {
        return Err(parse(
            1,
            format!("action_count {} is not {}", header.action_count, ActionId::COUNT),
        ));
    }
    let mut trajs: Vec<DemoTrajectory> = Vec::new();
    let mut current: Pending = None;
    let mut count = 0;
    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line).map_err(|e| parse(n, format!("bad record: {e}")))?;
        if rec.feature.len() != header.feature_dim {
            return Err(parse(
                n,
                format!(
                    "feature has dimension {}, header says {}",
                    rec.feature.len(),
                    header.feature_dim
                ),
            ));
        }
        let action = ActionId::from_index(rec.action).map_err(|e| parse(n, e.to_string()))?;
        let feature = FeatureVector::new(rec.feature).map_err(|e| parse(n, e.to_string()))?;
        let step = Step {
            traj_id: TrajId(rec.traj_id),
            t: rec.t,
            feature,
            action,
        };
        match &mut current {
            Some((id, task, steps)) if *id == rec.traj_id => {
                if *task != rec.task {
                    return Err(parse(n, format!("trajectory {id} changes task tag")));
                }
                steps.push(step);
            }
            _ => {
                if trajs.iter().any(|t| t.traj_id().0 == rec.traj_id) {
                    return Err(parse(
                        n,
                        format!("records of trajectory {} are not contiguous", rec.traj_id),
                    ));
                }
                finish(current.take(), &mut trajs).map_err(|e| e.context(format!("{}:{n}", path.display())))?;
                current = Some((rec.traj_id, rec.task, vec![step]));
            }
        }
        count += 1;
    }
    finish(current.take(), &mut trajs).map_err(|e| e.context(path.display().to_string()))?;
    if count != header.steps || trajs.len() != header.trajectories {
        return Err(parse(
            1,
            format!(
                "header promises {} trajectories and {} steps, file holds {} and {count}",
                header.trajectories,
                header.steps,
                trajs.len()
            ),
        ));
    }
    let mut ds = DemoDataset::new(trajs).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    ds.meta = header.meta;
    Ok(ds)
}

type Pending = Option<(u32, String, Vec<Step>)>;

fn finish(cur: Pending, trajs: &mut Vec<DemoTrajectory>) -> Result<()> {
    if let Some((id, task, steps)) = cur {
        trajs.push(DemoTrajectory::new(TrajId(id), task, steps)?);
    }
    Ok(())
}

pub fn save_dataset(dataset: &DemoDataset, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(dataset, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<DemoDataset> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(f), path)
}

pub fn dataset_to_string(dataset: &DemoDataset) -> String {
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// State graph, value table, and an optional behavior-cloning network built from one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub graph: StateGraph,
    pub values: ValueTable,
    pub gcbc: Option<GcbcModel>,
    pub meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    meta: BTreeMap<String, String>,
    merge_eps: f64,
    metric: GroundMetric,
    nodes: Vec<GraphNode>,
    edges: Vec<(usize, usize)>,
    gamma: f64,
    values: Vec<f64>,
    gcbc: Option<GcbcModel>,
}

impl Model {
    fn to_file(&self) -> ModelFile {
        let n = self.values.len();
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: FORMAT_VERSION,
            meta: self.meta.clone(),
            merge_eps: self.graph.merge_eps(),
            metric: self.graph.metric(),
            nodes: self.graph.nodes().to_vec(),
            edges: self.graph.edges().collect(),
            gamma: self.values.gamma(),
            values: (0..n).flat_map(|s| self.values.row(s).iter().copied()).collect(),
            gcbc: self.gcbc.clone(),
        }
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        if f.format != MODEL_FORMAT || f.version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format {} v{}",
                f.format, f.version
            )));
        }
        let n = f.nodes.len();
        let graph = StateGraph::from_parts(f.nodes, &f.edges, f.merge_eps, f.metric)?;
        let values = ValueTable::from_parts(f.gamma, n, f.values)?;
        Ok(Self {
            graph,
            values,
            gcbc: f.gcbc,
            meta: f.meta,
        })
    }
}

pub fn write_model<W: Write>(model: &Model, mut w: W) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, &model.to_file())?;
    w.write_all(b"\n")?;
    w.flush()
}

pub fn read_model<R: Read>(r: R, path: &Path) -> Result<Model> {
    let f: ModelFile = serde_json::from_reader(r).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    Model::from_file(f).map_err(|e| e.context(path.display().to_string()))
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(model, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(f), path)
}

/// Which artifact a file holds, judged from its leading `format` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Dataset,
    Model,
}

pub fn sniff(path: &Path) -> Result<FileKind> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = String::new();
    BufReader::new(f)
        .take(256)
        .read_to_string(&mut head)
        .map_err(|e| Error::io(path, e))?;
    if head.starts_with(&format!("{{\"format\":\"{DATASET_FORMAT}\"")) {
        Ok(FileKind::Dataset)
    } else if head.starts_with(&format!("{{\"format\":\"{MODEL_FORMAT}\"")) {
        Ok(FileKind::Model)
    } else {
        Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "neither a dataset nor a model file".into(),
        })
    }
}

/// Symmetric matrix of trajectory distances, rows and columns in trajectory id order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub ids: Vec<TrajId>,
    pub metric: GroundMetric,
    /// Row-major `ids.len() x ids.len()`.
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    /// Tab-separated text: a comment line, a header row of ids, then one row per trajectory.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# wasserstein metric={} n={}", self.metric.name(), self.ids.len())?;
        write!(w, "traj_id")?;
        for id in &self.ids {
            write!(w, "\t{id}")?;
        }
        writeln!(w)?;
        for (i, id) in self.ids.iter().enumerate() {
            write!(w, "{id}")?;
            for j in 0..self.ids.len() {
                write!(w, "\t{}", self.get(i, j))?;
            }
            writeln!(w)?;
        }
        w.flush()
    }
}
