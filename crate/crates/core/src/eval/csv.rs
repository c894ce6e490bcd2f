use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{EpisodeRecord, EvalSummary, StepTrace};
use crate::{Error, Result};

const EPISODES_HEADER: &str = "label,episode,seed,reward,collided,steps";
const SUMMARY_HEADER: &str = "label,mean_reward,std_reward,mean_collision_rate,std_collision_rate,episodes";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Appends when `append` is set and the file exists; otherwise writes a header first.
fn open_table(path: &Path, header: &str, append: bool) -> Result<BufWriter<File>> {
    if append && path.exists() {
        let f = File::options().append(true).open(path).map_err(|e| Error::io(path, e))?;
        return Ok(BufWriter::new(f));
    }
    let mut w = create(path)?;
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    Ok(w)
}

pub fn write_episodes_csv(path: &Path, label: &str, records: &[EpisodeRecord], append: bool) -> Result<()> {
    let mut w = open_table(path, EPISODES_HEADER, append)?;
    for r in records {
        writeln!(
            w,
            "{label},{},{},{},{},{}",
            r.episode, r.seed, r.reward, r.collided as u8, r.steps
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary_csv(path: &Path, summaries: &[EvalSummary]) -> Result<()> {
    let mut w = open_table(path, SUMMARY_HEADER, false)?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.label, s.mean_reward, s.std_reward, s.mean_collision_rate, s.std_collision_rate, s.episodes
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path, header: &str, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == header => {}
        Some(Err(e)) => return Err(Error::io(path, e)),
        _ => return Err(Error::format(path, format!("expected header '{header}'"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.trim_end().split(',').map(str::to_string).collect();
        if fields.len() != columns {
            return Err(Error::format(
                path,
                format!("line {}: expected {columns} fields, found {}", i + 2, fields.len()),
            ));
        }
        rows.push((i + 2, fields));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(path, format!("line {line}: bad {name} '{s}'")))
}

/// Reads `(label, record)` pairs.
pub fn read_episodes_csv(path: &Path) -> Result<Vec<(String, EpisodeRecord)>> {
    read_rows(path, EPISODES_HEADER, 6)?
        .into_iter()
        .map(|(line, f)| {
            let collided: u8 = field(path, line, "collided", &f[4])?;
            Ok((
                f[0].clone(),
                EpisodeRecord {
                    episode: field(path, line, "episode", &f[1])?,
                    seed: field(path, line, "seed", &f[2])?,
                    reward: field(path, line, "reward", &f[3])?,
                    collided: collided != 0,
                    steps: field(path, line, "steps", &f[5])?,
                },
            ))
        })
        .collect()
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<EvalSummary>> {
    read_rows(path, SUMMARY_HEADER, 6)?
        .into_iter()
        .map(|(line, f)| {
            Ok(EvalSummary {
                label: f[0].clone(),
                mean_reward: field(path, line, "mean_reward", &f[1])?,
                std_reward: field(path, line, "std_reward", &f[2])?,
                mean_collision_rate: field(path, line, "mean_collision_rate", &f[3])?,
                std_collision_rate: field(path, line, "std_collision_rate", &f[4])?,
                episodes: field(path, line, "episodes", &f[5])?,
            })
        })
        .collect()
}

/// Per-step trajectory dump: episode, step, action, reward, crashed, then
/// the 25 clean observation entries.
pub struct TrajectoryWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TrajectoryWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = create(path)?;
        let mut header = String::from("episode,step,action,reward,crashed");
        for i in 0..crate::envsim::OBS_DIM {
            header.push_str(&format!(",o{i}"));
        }
        writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
        Ok(TrajectoryWriter {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn write_step(&mut self, episode: usize, t: &StepTrace) -> Result<()> {
        let mut line = format!(
            "{episode},{},{},{},{}",
            t.step,
            t.action.index(),
            t.reward,
            t.crashed as u8
        );
        for v in t.observation.as_slice() {
            line.push_str(&format!(",{v}"));
        }
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}
