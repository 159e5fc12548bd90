//! Plugin directory loading and program lookup.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pline_core::pipeline::SpecSource;
use pline_core::{parse_plugin, PluginSpec};
use walkdir::WalkDir;

#[derive(Debug, Clone)]
pub struct RegisteredPlugin {
    pub spec: PluginSpec,
    /// Descriptor file.
    pub path: PathBuf,
}

impl RegisteredPlugin {
    pub fn dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    pub plugins: BTreeMap<String, RegisteredPlugin>,
    /// One line per skipped descriptor.
    pub diagnostics: Vec<String>,
}

impl SpecSource for Registry {
    fn spec(&self, id: &str) -> Option<&PluginSpec> {
        self.plugins.get(id).map(|p| &p.spec)
    }
}

impl Registry {
    /// Parses every `*.json` under `dir`. Bad descriptors are skipped and logged.
    pub fn load(dir: &Path) -> Registry {
        let mut reg = Registry::default();
        // Children run inside their step directory, so program paths must be absolute.
        let dir = std::path::absolute(dir).unwrap_or_else(|_| dir.to_path_buf());
        let mut files: Vec<PathBuf> = WalkDir::new(&dir)
            .follow_links(true)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "json"))
            .map(|e| e.into_path())
            .collect();
        files.sort();
        for path in files {
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => {
                    reg.skip(&path, &e.to_string());
                    continue;
                }
            };
            match parse_plugin(&text) {
                Ok(spec) => {
                    if let Some(prev) = reg.plugins.get(&spec.id) {
                        let msg = format!("duplicate plugin id '{}' (already loaded from {})", spec.id, prev.path.display());
                        reg.skip(&path, &msg);
                        continue;
                    }
                    tracing::info!(plugin = %spec.id, path = %path.display(), "registered plugin");
                    reg.plugins.insert(spec.id.clone(), RegisteredPlugin { spec, path });
                }
                Err(e) => reg.skip(&path, &e.to_string()),
            }
        }
        reg
    }

    fn skip(&mut self, path: &Path, msg: &str) {
        tracing::warn!(path = %path.display(), "skipping descriptor: {msg}");
        self.diagnostics.push(format!("{}: {msg}", path.display()));
    }

    pub fn get(&self, id: &str) -> Option<&RegisteredPlugin> {
        self.plugins.get(id)
    }

    pub fn specs(&self) -> BTreeMap<String, PluginSpec> {
        self.plugins.iter().map(|(k, v)| (k.clone(), v.spec.clone())).collect()
    }
}

fn is_executable(p: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    std::fs::metadata(p).is_ok_and(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
}

/// Finds a plugin's program: next to the descriptor first, then on `path_var`.
pub fn find_program(program: &str, plugin_dir: &Path, path_var: Option<&str>) -> Option<PathBuf> {
    if program.contains('/') {
        let p = plugin_dir.join(program);
        return is_executable(&p).then_some(p);
    }
    let local = plugin_dir.join(program);
    if is_executable(&local) {
        return Some(local);
    }
    std::env::split_paths(path_var?)
        .map(|d| d.join(program))
        .find(|p| is_executable(p))
}
