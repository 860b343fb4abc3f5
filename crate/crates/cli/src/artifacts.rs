//! Output files are built in memory and written only once a command has
//! succeeded, so a failed run leaves nothing behind.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use pooltest_core::Result;
use serde::Serialize;

const LOCK_NAME: &str = ".pooltest.lock";

pub struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Writes every file plus `run.toml`. Holds a lock file in the directory
    /// for the duration so two runs cannot interleave their outputs.
    pub fn commit<R: Serialize>(mut self, record: &R) -> Result<()> {
        let text = toml::to_string(record).map_err(|e| pooltest_core::Error::Domain(format!("run record: {e}")))?;
        self.add("run.toml", text.into_bytes());

        fs::create_dir_all(&self.dir)?;
        let lock = self.dir.join(LOCK_NAME);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .map_err(|e| {
                if e.kind() == io::ErrorKind::AlreadyExists {
                    io::Error::new(e.kind(), format!("{} is locked by another run", self.dir.display()))
                } else {
                    e
                }
            })?;
        let result = self.write_all();
        let _ = fs::remove_file(&lock);
        result
    }

    fn write_all(&self) -> Result<()> {
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            let tmp = self.dir.join(format!(".{name}.partial"));
            match write_file(&tmp, bytes).and_then(|_| fs::rename(&tmp, &path)) {
                Ok(()) => written.push(path),
                Err(e) => {
                    let _ = fs::remove_file(&tmp);
                    for p in &written {
                        let _ = fs::remove_file(p);
                    }
                    return Err(e.into());
                }
            }
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Rec {
        command: &'static str,
    }

    #[test]
    fn commit_writes_files_and_record() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path().join("o"));
        a.add("x.csv", b"a,b\n".to_vec());
        a.commit(&Rec { command: "t" }).unwrap();
        assert_eq!(fs::read(dir.path().join("o/x.csv")).unwrap(), b"a,b\n");
        assert_eq!(
            fs::read_to_string(dir.path().join("o/run.toml")).unwrap(),
            "command = \"t\"\n"
        );
        assert!(!dir.path().join("o").join(LOCK_NAME).exists());
    }

    #[test]
    fn locked_directory_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LOCK_NAME), "").unwrap();
        let mut a = Artifacts::new(dir.path());
        a.add("x.csv", Vec::new());
        assert!(a.commit(&Rec { command: "t" }).is_err());
        assert!(!dir.path().join("x.csv").exists());
    }
}
