//! Output directory ownership, run manifests, CSV helpers and sample inputs.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use argrl::io;
use argrl::State;

const LOCK_FILE: &str = ".argrl.lock";
pub const MANIFEST_FILE: &str = "run.manifest";

/// An output directory owned by this run until dropped.
pub struct RunDir {
    root: PathBuf,
    lock: PathBuf,
}

impl RunDir {
    pub fn open(root: &Path, command: &str, settings: &BTreeMap<String, String>) -> Result<RunDir> {
        fs::create_dir_all(root)
            .with_context(|| format!("cannot create output directory {}", root.display()))?;
        let lock = root.join(LOCK_FILE);
        let mut f = match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "output directory {} is owned by another run (remove {} if it is stale)",
                root.display(),
                lock.display()
            ),
            Err(e) => return Err(e).with_context(|| format!("cannot create {}", lock.display())),
        };
        writeln!(f, "pid={}", std::process::id())?;
        let dir = RunDir {
            root: root.to_path_buf(),
            lock,
        };
        let mut manifest = BTreeMap::new();
        manifest.insert("tool".to_string(), env!("CARGO_PKG_NAME").to_string());
        manifest.insert("version".to_string(), env!("CARGO_PKG_VERSION").to_string());
        manifest.insert("command".to_string(), command.to_string());
        manifest.insert(
            "block_order_version".to_string(),
            argrl::features::BLOCK_ORDER_VERSION.to_string(),
        );
        for (k, v) in settings {
            manifest.insert(format!("config.{k}"), v.clone());
        }
        dir.write_text(MANIFEST_FILE, &io::format_metadata(&manifest))?;
        Ok(dir)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let p = self.root.join(name);
        fs::create_dir_all(&p).with_context(|| format!("cannot create {}", p.display()))?;
        Ok(p)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))?;
        Ok(p)
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvOut> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(&p).with_context(|| format!("cannot write {}", p.display()))?;
        w.write_record(header)?;
        Ok(CsvOut { w, path: p })
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

pub struct CsvOut {
    w: csv::Writer<fs::File>,
    path: PathBuf,
}

impl CsvOut {
    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w
            .write_record(fields)
            .with_context(|| format!("cannot write {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.w.flush()?;
        Ok(self.path)
    }
}

/// Length cell: the number, or `inf` for an infinite build.
pub fn length_cell(l: Option<usize>) -> String {
    l.map_or_else(|| "inf".to_string(), |l| l.to_string())
}

pub fn float_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |v| format!("{v}"))
}

pub struct Input {
    pub id: String,
    pub state: State,
    pub meta: BTreeMap<String, String>,
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".into())
}

/// Samples from files (a sample-set file yields `stem_k` ids) and from
/// directories (every `.txt` file, in name order). A `stem.meta` sidecar
/// next to a file supplies its metadata.
pub fn load_inputs(paths: &[PathBuf]) -> Result<Vec<Input>> {
    if paths.is_empty() {
        bail!("no sample inputs given");
    }
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x == "txt"))
                .collect();
            entries.sort();
            if entries.is_empty() {
                bail!("directory {} holds no .txt sample files", p.display());
            }
            files.extend(entries);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            bail!("sample file {} does not exist", p.display());
        }
    }
    let mut out = Vec::new();
    for f in files {
        let samples = io::load_sample_set(&f).with_context(|| format!("cannot load {}", f.display()))?;
        if samples.is_empty() {
            bail!("{} holds no samples", f.display());
        }
        let sidecar = f.with_extension("meta");
        let meta = if sidecar.is_file() {
            io::parse_metadata(&io::read(&sidecar)?)
                .with_context(|| format!("malformed metadata {}", sidecar.display()))?
        } else {
            BTreeMap::new()
        };
        let single = samples.len() == 1;
        for (k, state) in samples.into_iter().enumerate() {
            let id = if single {
                stem(&f)
            } else {
                format!("{}_{k:03}", stem(&f))
            };
            out.push(Input {
                id,
                state,
                meta: meta.clone(),
            });
        }
    }
    Ok(out)
}

/// Checkpoint paths from a manifest file: one path per line, relative paths
/// resolved against the manifest's directory, `#` comments allowed.
pub fn read_model_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = io::read(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let models: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect();
    if models.is_empty() {
        bail!("manifest {} lists no checkpoints", path.display());
    }
    Ok(models)
}

/// Checkpoint files from explicit paths or directories (every `.ckpt`).
pub fn collect_checkpoints(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x == "ckpt"))
                .collect();
            entries.sort();
            out.extend(entries);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            bail!("checkpoint {} does not exist", p.display());
        }
    }
    if out.is_empty() {
        bail!("no checkpoints found");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunDir::open(dir.path(), "t", &BTreeMap::new()).unwrap();
        assert!(RunDir::open(dir.path(), "t", &BTreeMap::new()).is_err());
        drop(a);
        assert!(RunDir::open(dir.path(), "t", &BTreeMap::new()).is_ok());
    }

    #[test]
    fn csv_quotes_fields() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::open(dir.path(), "t", &BTreeMap::new()).unwrap();
        let mut c = run.csv("x.csv", &["a", "b"]).unwrap();
        c.row(["1", "x,y"]).unwrap();
        let p = c.finish().unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "a,b\n1,\"x,y\"\n");
    }

    #[test]
    fn inputs_from_sets_and_dirs() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "01\n10\n\n001\n110\n").unwrap();
        fs::write(dir.path().join("a.txt"), "0011\n1011\n").unwrap();
        fs::write(dir.path().join("a.meta"), "rho=0\n").unwrap();
        let inputs = load_inputs(&[dir.path().to_path_buf()]).unwrap();
        let ids: Vec<&str> = inputs.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["a", "b_000", "b_001"]);
        assert_eq!(inputs[0].meta["rho"], "0");
        assert!(load_inputs(&[dir.path().join("missing.txt")]).is_err());
    }
}
