//! Per-phase cosine-similarity matrices stacked into an `N x N x P` tensor.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor3;

pub fn default_phases() -> Vec<String> {
    vec!["A".into(), "B".into(), "C".into()]
}

/// One embedding vector per (video, phase), all of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    videos: Vec<String>,
    phases: Vec<String>,
    dim: usize,
    // vectors[v * phases.len() + p]
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    /// `vectors[v][p]` is the embedding of video `v` in phase `p`.
    pub fn new(
        videos: Vec<String>,
        phases: Vec<String>,
        vectors: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if videos.is_empty() {
            return Err(Error::InvalidEmbeddings("no videos".into()));
        }
        if phases.is_empty() {
            return Err(Error::InvalidEmbeddings("no phases".into()));
        }
        if vectors.len() != videos.len() {
            return Err(Error::InvalidEmbeddings(format!(
                "{} videos but {} vector groups",
                videos.len(),
                vectors.len()
            )));
        }
        check_unique(&videos, "video")?;
        check_unique(&phases, "phase")?;
        let dim = vectors
            .first()
            .and_then(|g| g.first())
            .map(Vec::len)
            .unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidEmbeddings(
                "embedding dimension must be at least 1".into(),
            ));
        }
        let mut flat = Vec::with_capacity(videos.len() * phases.len());
        for (v, group) in vectors.into_iter().enumerate() {
            if group.len() != phases.len() {
                return Err(Error::InvalidEmbeddings(format!(
                    "video `{}` has {} phase vectors, expected {}",
                    videos[v],
                    group.len(),
                    phases.len()
                )));
            }
            for (p, vec) in group.into_iter().enumerate() {
                if vec.len() != dim {
                    return Err(Error::InvalidEmbeddings(format!(
                        "video `{}` phase `{}` has dimension {}, expected {dim}",
                        videos[v],
                        phases[p],
                        vec.len()
                    )));
                }
                if vec.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidEmbeddings(format!(
                        "video `{}` phase `{}` has a non-finite component",
                        videos[v], phases[p]
                    )));
                }
                if vec.iter().all(|x| *x == 0.0) {
                    return Err(Error::ZeroNorm {
                        video: videos[v].clone(),
                        phase: phases[p].clone(),
                    });
                }
                flat.push(vec);
            }
        }
        Ok(Self {
            videos,
            phases,
            dim,
            vectors: flat,
        })
    }

    /// Parses `video_id,phase,dim_0,...,dim_{D-1}`. Video order is the order of
    /// first appearance; phases must all belong to `phases` and every
    /// (video, phase) pair must appear exactly once.
    pub fn from_csv<R: Read>(reader: R, phases: &[String]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv(format!("embeddings header: {e}")))?
            .clone();
        if headers.len() < 3 || &headers[0] != "video_id" || &headers[1] != "phase" {
            return Err(Error::Csv(
                "embeddings header must be `video_id,phase,dim_0,...`".into(),
            ));
        }
        for (d, h) in headers.iter().skip(2).enumerate() {
            if h != format!("dim_{d}") {
                return Err(Error::Csv(format!(
                    "embeddings header column {} is `{h}`, expected `dim_{d}`",
                    d + 3
                )));
            }
        }
        let dim = headers.len() - 2;
        let phase_index: HashMap<&str, usize> = phases
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();

        let mut videos: Vec<String> = Vec::new();
        let mut video_index: HashMap<String, usize> = HashMap::new();
        let mut slots: Vec<Vec<Option<Vec<f64>>>> = Vec::new();

        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::Csv(format!("line {line}: {e}"))
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != dim + 2 {
                return Err(Error::Csv(format!(
                    "line {line}: expected {} fields, found {}",
                    dim + 2,
                    record.len()
                )));
            }
            let video = record[0].to_string();
            let phase = &record[1];
            let p = *phase_index.get(phase).ok_or_else(|| {
                Error::Csv(format!(
                    "line {line}: unknown phase `{phase}` (expected one of {phases:?})"
                ))
            })?;
            let mut vec = Vec::with_capacity(dim);
            for (d, field) in record.iter().skip(2).enumerate() {
                let x: f64 = field.parse().map_err(|_| {
                    Error::Csv(format!(
                        "line {line}: dim_{d} value `{field}` is not a number"
                    ))
                })?;
                vec.push(x);
            }
            let v = *video_index.entry(video.clone()).or_insert_with(|| {
                videos.push(video.clone());
                slots.push(vec![None; phases.len()]);
                videos.len() - 1
            });
            if slots[v][p].is_some() {
                return Err(Error::Csv(format!(
                    "line {line}: duplicate row for video `{video}` phase `{phase}`"
                )));
            }
            slots[v][p] = Some(vec);
        }
        if videos.is_empty() {
            return Err(Error::Csv("embeddings file has no data rows".into()));
        }
        let mut vectors = Vec::with_capacity(videos.len());
        for (v, group) in slots.into_iter().enumerate() {
            let mut filled = Vec::with_capacity(phases.len());
            for (p, slot) in group.into_iter().enumerate() {
                filled.push(slot.ok_or_else(|| {
                    Error::InvalidEmbeddings(format!(
                        "missing embedding for video `{}` phase `{}`",
                        videos[v], phases[p]
                    ))
                })?);
            }
            vectors.push(filled);
        }
        Self::new(videos, phases.to_vec(), vectors)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["video_id".to_string(), "phase".to_string()];
        header.extend((0..self.dim).map(|d| format!("dim_{d}")));
        w.write_record(&header)
            .map_err(|e| Error::Csv(e.to_string()))?;
        for (v, video) in self.videos.iter().enumerate() {
            for (p, phase) in self.phases.iter().enumerate() {
                let mut row = vec![video.clone(), phase.clone()];
                row.extend(self.vector(v, p).iter().map(|x| x.to_string()));
                w.write_record(&row)
                    .map_err(|e| Error::Csv(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn videos(&self) -> &[String] {
        &self.videos
    }

    pub fn phases(&self) -> &[String] {
        &self.phases
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, video: usize, phase: usize) -> &[f64] {
        &self.vectors[video * self.phases.len() + phase]
    }
}

fn check_unique(items: &[String], what: &str) -> Result<()> {
    let mut seen = HashMap::new();
    for item in items {
        if seen.insert(item.as_str(), ()).is_some() {
            return Err(Error::InvalidEmbeddings(format!(
                "duplicate {what} `{item}`"
            )));
        }
    }
    Ok(())
}

/// Cosine of the angle between `x` and `y`, clamped to `[-1, 1]`.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    let sx = dot(x, x);
    let sy = dot(y, y);
    if sx == 0.0 || sy == 0.0 {
        return Err(Error::InvalidEmbeddings("zero-norm vector".into()));
    }
    Ok(cosine_from_parts(dot(x, y), sx, sy))
}

// sqrt(|x|^2 |y|^2) rather than |x| |y|, so that x == y gives exactly 1.
fn cosine_from_parts(xy: f64, xx: f64, yy: f64) -> f64 {
    (xy / (xx * yy).sqrt()).clamp(-1.0, 1.0)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Stacks the per-phase similarity matrices. Diagonals are exactly 1 and each
/// slice is filled from its upper triangle and mirrored.
pub fn build_similarity_tensor(e: &EmbeddingSet) -> Result<DenseTensor3> {
    let n = e.videos.len();
    let p = e.phases.len();
    let mut sq_norms = vec![0.0; n * p];
    for v in 0..n {
        for k in 0..p {
            let nv = dot(e.vector(v, k), e.vector(v, k));
            if nv == 0.0 || !nv.is_finite() {
                return Err(Error::ZeroNorm {
                    video: e.videos[v].clone(),
                    phase: e.phases[k].clone(),
                });
            }
            sq_norms[v * p + k] = nv;
        }
    }
    let mut t = DenseTensor3::zeros((n, n, p));
    for k in 0..p {
        for j in 0..n {
            t.set(j, j, k, 1.0);
            for i in 0..j {
                let c = cosine_from_parts(
                    dot(e.vector(i, k), e.vector(j, k)),
                    sq_norms[i * p + k],
                    sq_norms[j * p + k],
                );
                t.set(i, j, k, c);
                t.set(j, i, k, c);
            }
        }
    }
    Ok(t)
}

/// Maps tensor indices back to video ids and phase labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorManifest {
    pub videos: Vec<String>,
    pub phases: Vec<String>,
}

impl TensorManifest {
    pub fn from_embeddings(e: &EmbeddingSet) -> Self {
        Self {
            videos: e.videos.clone(),
            phases: e.phases.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeOfDay {
    OffPeak,
    MorningRush,
    Midday,
    AfternoonEvening,
}

impl TimeOfDay {
    pub const ALL: [TimeOfDay; 4] = [
        TimeOfDay::OffPeak,
        TimeOfDay::MorningRush,
        TimeOfDay::Midday,
        TimeOfDay::AfternoonEvening,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TimeOfDay::OffPeak => "off-peak",
            TimeOfDay::MorningRush => "morning-rush",
            TimeOfDay::Midday => "midday",
            TimeOfDay::AfternoonEvening => "afternoon-evening",
        }
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimeOfDay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| {
                if c == '_' || c == ' ' || c == '/' {
                    '-'
                } else {
                    c
                }
            })
            .collect();
        TimeOfDay::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| Error::Csv(format!("unknown time_of_day `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMetadata {
    pub video_id: String,
    pub location: String,
    pub time_of_day: TimeOfDay,
}

/// Parses `video_id,location,time_of_day`. Duplicated ids are rejected.
pub fn read_metadata_csv<R: Read>(reader: R) -> Result<Vec<VideoMetadata>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv(format!("metadata header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["video_id", "location", "time_of_day"] {
        return Err(Error::Csv(
            "metadata header must be `video_id,location,time_of_day`".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv(format!("metadata: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let time_of_day = record[2]
            .parse::<TimeOfDay>()
            .map_err(|e| Error::Csv(format!("metadata line {line}: {e}")))?;
        let row = VideoMetadata {
            video_id: record[0].to_string(),
            location: record[1].to_string(),
            time_of_day,
        };
        if seen.insert(row.video_id.clone(), ()).is_some() {
            return Err(Error::Csv(format!(
                "metadata line {line}: duplicate video `{}`",
                row.video_id
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Orders metadata rows to match `videos`; every video needs exactly one row.
pub fn align_metadata(videos: &[String], rows: &[VideoMetadata]) -> Result<Vec<VideoMetadata>> {
    let by_id: HashMap<&str, &VideoMetadata> =
        rows.iter().map(|r| (r.video_id.as_str(), r)).collect();
    videos
        .iter()
        .map(|v| {
            by_id
                .get(v.as_str())
                .map(|r| (*r).clone())
                .ok_or_else(|| Error::Csv(format!("no metadata row for video `{v}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(vectors: Vec<Vec<Vec<f64>>>, phases: &[&str]) -> EmbeddingSet {
        let videos = (0..vectors.len()).map(|i| format!("v{i}")).collect();
        EmbeddingSet::new(
            videos,
            phases.iter().map(|s| s.to_string()).collect(),
            vectors,
        )
        .unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(
            cosine_similarity(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap(),
            1.0
        );
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.7071067811865475).abs() < 1e-12);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn identical_vectors_give_ones() {
        let e = set(
            vec![
                vec![vec![1.0, 2.0], vec![0.5, 0.5], vec![3.0, -1.0]],
                vec![vec![1.0, 2.0], vec![0.5, 0.5], vec![3.0, -1.0]],
            ],
            &["A", "B", "C"],
        );
        let t = build_similarity_tensor(&e).unwrap();
        assert_eq!(t.dims(), (2, 2, 3));
        assert!(t.values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn two_video_slices() {
        let e = set(
            vec![
                vec![vec![1.0, 0.0], vec![1.0, 1.0]],
                vec![vec![0.0, 1.0], vec![1.0, 1.0]],
            ],
            &["A", "B"],
        );
        let t = build_similarity_tensor(&e).unwrap();
        assert_eq!(
            t.slice(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(
            t.slice(1).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn zero_vector_names_offender() {
        let err = EmbeddingSet::new(
            vec!["a".into(), "b".into()],
            vec!["A".into(), "B".into()],
            vec![vec![vec![1.0], vec![1.0]], vec![vec![1.0], vec![0.0]]],
        )
        .unwrap_err();
        match err {
            Error::ZeroNorm { video, phase } => {
                assert_eq!(video, "b");
                assert_eq!(phase, "B");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_roundtrip_and_order() {
        let text = "video_id,phase,dim_0,dim_1\n\
                    v2,A,1,0\nv2,B,0,1\nv1,B,1,1\nv1,A,2,0\n";
        let phases = vec!["A".to_string(), "B".to_string()];
        let e = EmbeddingSet::from_csv(text.as_bytes(), &phases).unwrap();
        assert_eq!(e.videos(), &["v2".to_string(), "v1".to_string()]);
        assert_eq!(e.vector(1, 0), &[2.0, 0.0]);
        let mut out = Vec::new();
        e.write_csv(&mut out).unwrap();
        let again = EmbeddingSet::from_csv(out.as_slice(), &phases).unwrap();
        assert_eq!(again, e);
    }

    #[test]
    fn csv_errors() {
        let phases = default_phases();
        let empty = "video_id,phase,dim_0\n";
        assert!(EmbeddingSet::from_csv(empty.as_bytes(), &phases).is_err());

        let dup = "video_id,phase,dim_0\nx,A,1\nx,B,1\nx,C,1\nx,A,2\n";
        let msg = EmbeddingSet::from_csv(dup.as_bytes(), &phases)
            .unwrap_err()
            .to_string();
        assert!(
            msg.contains("duplicate") && msg.contains("`x`") && msg.contains("`A`"),
            "{msg}"
        );
        assert!(msg.contains("line 5"), "{msg}");

        let missing = "video_id,phase,dim_0\nx,A,1\nx,B,1\n";
        let msg = EmbeddingSet::from_csv(missing.as_bytes(), &phases)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("`x`") && msg.contains("`C`"), "{msg}");

        let bad = "video_id,phase,dim_0\nx,A,1\nx,B,oops\n";
        let msg = EmbeddingSet::from_csv(bad.as_bytes(), &phases)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 3"), "{msg}");

        let short = "video_id,phase,dim_0,dim_1\nx,A,1\n";
        assert!(EmbeddingSet::from_csv(short.as_bytes(), &phases).is_err());
    }

    #[test]
    fn metadata_parsing() {
        let text = "video_id,location,time_of_day\nv1,35th St,off-peak\nv2,NW 12th,Morning Rush\n";
        let rows = read_metadata_csv(text.as_bytes()).unwrap();
        assert_eq!(rows[1].time_of_day, TimeOfDay::MorningRush);
        let aligned = align_metadata(&["v2".into(), "v1".into()], &rows).unwrap();
        assert_eq!(aligned[0].location, "NW 12th");
        assert!(align_metadata(&["v3".into()], &rows).is_err());
        assert!("noon".parse::<TimeOfDay>().is_err());
    }
}
