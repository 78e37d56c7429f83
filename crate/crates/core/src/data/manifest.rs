use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trajectory::{ArticTrajectory, TRAJ_RATE};
use crate::audfront::{self, AuditorySpectrogram, FRAME_RATE, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Init,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Dev, Split::Test, Split::Init];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Init => "init",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown split `{s}` (expected train, dev, test or init)")))
    }
}

/// One utterance held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub id: String,
    pub speaker: String,
    pub split: Split,
    pub spectrogram: Option<AuditorySpectrogram>,
    pub trajectory: Option<ArticTrajectory>,
    /// Source WAV, kept for reference when the item came from audio.
    pub wav: Option<PathBuf>,
}

impl Item {
    pub fn spec(&self) -> Result<&AuditorySpectrogram> {
        self.spectrogram
            .as_ref()
            .ok_or_else(|| Error::Manifest {
                item: self.id.clone(),
                reason: "no spectrogram loaded".into(),
            })
    }

    pub fn traj(&self) -> Result<&ArticTrajectory> {
        self.trajectory.as_ref().ok_or_else(|| Error::MissingTrajectory(self.id.clone()))
    }
}

pub fn in_split(items: &[Item], split: Split) -> Vec<Item> {
    items.iter().filter(|i| i.split == split).cloned().collect()
}

/// Manifest row as stored on disk. Paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub speaker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wav: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrogram: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    pub split: Split,
}

/// Largest tolerated gap between trajectory and audio durations.
pub const DURATION_TOLERANCE_S: f64 = 0.02;

/// Loads and validates every item of a manifest, in file order.
/// Spectrograms are read from CSV when given, otherwise computed from
/// the WAV.
pub fn load_manifest(path: &Path) -> Result<Vec<Item>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        what: "manifest",
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = BTreeSet::new();
    entries
        .into_iter()
        .map(|e| {
            let fail = |reason: String| Error::Manifest {
                item: e.id.clone(),
                reason,
            };
            if e.id.is_empty() {
                return Err(fail("empty id".into()));
            }
            if !seen.insert(e.id.clone()) {
                return Err(fail("duplicate id".into()));
            }
            if e.speaker.is_empty() {
                return Err(fail("empty speaker".into()));
            }
            let resolve = |p: &str| base.join(p);
            let (spec, audio_dur) = match (&e.spectrogram, &e.wav) {
                (Some(s), _) => {
                    let spec = AuditorySpectrogram::read_csv(&resolve(s)).map_err(|err| fail(err.to_string()))?;
                    let dur = match &e.wav {
                        Some(w) => {
                            let (x, _) = audfront::wav::read(&resolve(w)).map_err(|err| fail(err.to_string()))?;
                            x.len() as f64 / SAMPLE_RATE as f64
                        }
                        None => spec.frames() as f64 / FRAME_RATE,
                    };
                    (spec, dur)
                }
                (None, Some(w)) => {
                    let (x, fs) = audfront::wav::read(&resolve(w)).map_err(|err| fail(err.to_string()))?;
                    let spec = audfront::auditory_spectrogram(&x, fs).map_err(|err| fail(err.to_string()))?;
                    (spec, x.len() as f64 / fs as f64)
                }
                (None, None) => return Err(fail("needs a wav or a spectrogram path".into())),
            };
            let trajectory = match &e.trajectory {
                Some(t) => {
                    let traj = ArticTrajectory::read_csv(&resolve(t)).map_err(|err| fail(err.to_string()))?;
                    let gap = (traj.frames() as f64 / TRAJ_RATE - audio_dur).abs();
                    if gap >= DURATION_TOLERANCE_S {
                        return Err(fail(format!(
                            "trajectory lasts {:.3} s but audio lasts {:.3} s",
                            traj.frames() as f64 / TRAJ_RATE,
                            audio_dur
                        )));
                    }
                    Some(traj)
                }
                None => None,
            };
            Ok(Item {
                wav: e.wav.as_deref().map(resolve),
                id: e.id,
                speaker: e.speaker,
                split: e.split,
                spectrogram: Some(spec),
                trajectory,
            })
        })
        .collect()
}

/// Writes every item's spectrogram and trajectory under `dir` and a
/// `manifest.json` listing them. Returns the manifest path.
pub fn write_dataset(dir: &Path, items: &[Item]) -> Result<PathBuf> {
    for sub in ["spec", "traj"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let mut entries = Vec::with_capacity(items.len());
    for it in items {
        let spectrogram = match &it.spectrogram {
            Some(s) => {
                let rel = format!("spec/{}.csv", it.id);
                s.write_csv(&dir.join(&rel))?;
                Some(rel)
            }
            None => None,
        };
        let trajectory = match &it.trajectory {
            Some(t) => {
                let rel = format!("traj/{}.csv", it.id);
                t.write_csv(&dir.join(&rel))?;
                Some(rel)
            }
            None => None,
        };
        entries.push(ManifestEntry {
            id: it.id.clone(),
            speaker: it.speaker.clone(),
            wav: None,
            spectrogram,
            trajectory,
            split: it.split,
        });
    }
    let path = dir.join("manifest.json");
    write_manifest(&path, &entries)?;
    Ok(path)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(entries)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Partitions distinct speakers into `ratios.len()` disjoint groups.
/// Counts follow largest-remainder rounding, then every group is given at
/// least one speaker by taking from the largest. Deterministic per seed.
pub fn split_speakers(speakers: &[String], ratios: &[f64], seed: u64) -> Result<Vec<Vec<String>>> {
    let mut uniq: Vec<String> = speakers.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let n = uniq.len();
    if ratios.is_empty() || ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || ratios.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Invalid(format!("invalid split ratios {ratios:?}")));
    }
    if n < ratios.len() {
        return Err(Error::TooFewSpeakers {
            speakers: n,
            splits: ratios.len(),
        });
    }
    let total: f64 = ratios.iter().sum();
    let quotas: Vec<f64> = ratios.iter().map(|r| r / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let largest = (0..counts.len()).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
        counts[largest] -= 1;
        counts[empty] += 1;
    }
    uniq.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(counts.len());
    let mut start = 0;
    for c in counts {
        let mut group = uniq[start..start + c].to_vec();
        group.sort();
        out.push(group);
        start += c;
    }
    Ok(out)
}

/// Tags each item with the split of its speaker.
pub fn split_by_speaker(items: &mut [Item], splits: &[(Split, f64)], seed: u64) -> Result<()> {
    let speakers: Vec<String> = items.iter().map(|i| i.speaker.clone()).collect();
    let ratios: Vec<f64> = splits.iter().map(|s| s.1).collect();
    let groups = split_speakers(&speakers, &ratios, seed)?;
    let mut of: BTreeMap<&str, Split> = BTreeMap::new();
    for (g, (split, _)) in groups.iter().zip(splits) {
        for s in g {
            of.insert(s, *split);
        }
    }
    for it in items.iter_mut() {
        it.split = of[it.speaker.as_str()];
    }
    Ok(())
}

/// A fixed-length training example: spectrogram crop and, when known,
/// the aligned trajectory crop.
#[derive(Clone, Debug)]
pub struct Crop {
    pub item: String,
    pub spectrogram: AuditorySpectrogram,
    pub trajectory: Option<ArticTrajectory>,
}

/// Cuts items into consecutive non-overlapping crops of `traj_frames`
/// trajectory frames (a multiple of 4) and `5/4` as many spectrogram
/// frames. Remainders are dropped; items shorter than a crop are skipped
/// with a warning.
pub fn fixed_crops(items: &[Item], traj_frames: usize) -> Result<Vec<Crop>> {
    if traj_frames == 0 || traj_frames % 4 != 0 {
        return Err(Error::InvalidLength {
            op: "fixed_crops",
            len: traj_frames,
            reason: "crop length must be a positive multiple of 4".into(),
        });
    }
    let spec_frames = traj_frames * 5 / 4;
    let mut out = Vec::new();
    for it in items {
        let spec = it.spec()?;
        let avail = match &it.trajectory {
            Some(t) => (t.frames() / traj_frames).min(spec.frames() / spec_frames),
            None => spec.frames() / spec_frames,
        };
        if avail == 0 {
            log::warn!("item {} is shorter than one {}-frame crop; skipped", it.id, traj_frames);
        }
        for i in 0..avail {
            out.push(Crop {
                item: if avail == 1 { it.id.clone() } else { format!("{}#{i}", it.id) },
                spectrogram: spec.crop(i * spec_frames, spec_frames)?,
                trajectory: it.trajectory.as_ref().map(|t| t.crop(i * traj_frames, traj_frames)).transpose()?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:02}")).collect()
    }

    #[test]
    fn paper_speaker_counts() {
        let g = split_speakers(&names(46), &[0.78, 0.11, 0.11], 0).unwrap();
        assert_eq!(g.iter().map(Vec::len).collect::<Vec<_>>(), vec![36, 5, 5]);
    }

    #[test]
    fn one_speaker_each() {
        let g = split_speakers(&names(3), &[0.78, 0.11, 0.11], 5).unwrap();
        assert_eq!(g.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 1, 1]);
        assert!(matches!(
            split_speakers(&names(2), &[0.5, 0.3, 0.2], 0),
            Err(Error::TooFewSpeakers { speakers: 2, splits: 3 })
        ));
    }

    #[test]
    fn disjoint_and_deterministic() {
        for seed in 0..20 {
            let mut sp = names(17);
            sp.extend(names(17));
            let g = split_speakers(&sp, &[0.6, 0.2, 0.2], seed).unwrap();
            assert_eq!(g, split_speakers(&sp, &[0.6, 0.2, 0.2], seed).unwrap());
            let all: BTreeSet<&String> = g.iter().flatten().collect();
            assert_eq!(all.len(), 17);
            assert_eq!(g.iter().map(Vec::len).sum::<usize>(), 17);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut items = gen_synthetic(4, 1.0, 3).unwrap();
        split_by_speaker(&mut items, &[(Split::Train, 0.5), (Split::Test, 0.5)], 1).unwrap();
        let path = write_dataset(dir.path(), &items).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in items.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.split, b.split);
            assert_eq!(a.trajectory, b.trajectory);
            assert_eq!(a.spec().unwrap().frames(), b.spec().unwrap().frames());
        }
    }

    #[test]
    fn manifest_rejects_bad_items() {
        let dir = tempfile::tempdir().unwrap();
        let items = gen_synthetic(1, 1.0, 3).unwrap();
        let path = write_dataset(dir.path(), &items).unwrap();
        let entry = |extra: &str| format!(r#"[{{"id":"a","speaker":"s","split":"train"{extra}}}]"#);
        std::fs::write(&path, entry("")).unwrap();
        let e = load_manifest(&path).unwrap_err();
        assert!(matches!(&e, Error::Manifest { item, .. } if item == "a"), "{e}");
        std::fs::write(&path, entry(r#","spectrogram":"missing.csv""#)).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Manifest { .. })));
        std::fs::write(&path, entry(r#","bogus":1"#)).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Malformed { .. })));
        // 1 s spectrogram against a 0.5 s trajectory
        let short = items[0].traj().unwrap().crop(0, 50).unwrap();
        short.write_csv(&dir.path().join("short.csv")).unwrap();
        std::fs::write(
            &path,
            entry(r#","spectrogram":"spec/syn0000.csv","trajectory":"short.csv""#),
        )
        .unwrap();
        let e = load_manifest(&path).unwrap_err().to_string();
        assert!(e.contains("lasts"), "{e}");
    }

    #[test]
    fn crops_align() {
        let items = gen_synthetic(2, 4.0, 0).unwrap();
        let crops = fixed_crops(&items, 200).unwrap();
        assert_eq!(crops.len(), 4);
        assert_eq!(crops[1].spectrogram.frames(), 250);
        assert_eq!(
            crops[1].trajectory.as_ref().unwrap().channel(0),
            &items[0].traj().unwrap().channel(0)[200..400]
        );
        assert!(fixed_crops(&items, 10).is_err());
    }
}
