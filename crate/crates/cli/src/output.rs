//! Hash-guarded output files.

use std::fs;
use std::path::PathBuf;

use crate::CliError;

/// Output directory plus the hash every file must carry.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub root: PathBuf,
    pub config_hash: String,
    pub force: bool,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>, config_hash: String, force: bool) -> Result<Self, CliError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root, config_hash, force })
    }

    /// Writes `name`, refusing to replace a file produced by another
    /// configuration unless forced.
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        if !self.force {
            if let Ok(existing) = fs::read_to_string(&path) {
                match embedded_hash(&existing) {
                    Some(h) if h == self.config_hash => {}
                    found => {
                        return Err(CliError::Refused(format!(
                            "{} was written with config hash {}; rerun with --force to replace it",
                            path.display(),
                            found.unwrap_or("<none>")
                        )))
                    }
                }
            }
        }
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Finds the config hash in a CSV header (`config_hash=…`) or a JSON body
/// (`"config_hash": "…"`).
pub fn embedded_hash(text: &str) -> Option<&str> {
    fn take_hex(s: &str) -> Option<&str> {
        let end = s.find(|c: char| !c.is_ascii_hexdigit()).unwrap_or(s.len());
        (end > 0).then(|| &s[..end])
    }
    if let Some(i) = text.find("config_hash=") {
        return take_hex(&text[i + "config_hash=".len()..]);
    }
    let i = text.find("\"config_hash\"")?;
    let rest = &text[i + "\"config_hash\"".len()..];
    let rest = rest.trim_start().strip_prefix(':')?.trim_start().strip_prefix('"')?;
    take_hex(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_hash_in_csv_and_json() {
        assert_eq!(embedded_hash("# duration_s=1,config_hash=abc123\nx,y\n"), Some("abc123"));
        assert_eq!(embedded_hash("{\n  \"config_hash\": \"00ff\",\n}"), Some("00ff"));
        assert_eq!(embedded_hash("nothing here"), None);
    }

    #[test]
    fn mismatched_hash_needs_force() {
        let dir = std::env::temp_dir().join(format!("biphoton-out-{}", std::process::id()));
        let a = OutputDir::new(&dir, "aaaa".into(), false).unwrap();
        a.write("x.csv", b"# config_hash=aaaa\n").unwrap();
        a.write("x.csv", b"# config_hash=aaaa\n1\n").unwrap();
        let b = OutputDir::new(&dir, "bbbb".into(), false).unwrap();
        assert!(matches!(b.write("x.csv", b"# config_hash=bbbb\n"), Err(CliError::Refused(_))));
        let forced = OutputDir { force: true, ..b };
        forced.write("x.csv", b"# config_hash=bbbb\n").unwrap();
        fs::remove_dir_all(dir).unwrap();
    }
}
