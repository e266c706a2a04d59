use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use stochheat::Error;

pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;

/// Overrides the directory campaign reports are written to.
pub const OUT_DIR_ENV: &str = "STOCHHEAT_OUT_DIR";

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: String) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message,
        }
    }

    /// A library error blamed on a command-line flag.
    pub fn flag(flag: &str, e: &Error) -> Self {
        let mut f = Failure::from(e.clone());
        f.message = format!("{flag}: {}", f.message);
        f
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. } => EXIT_DIVERGENCE,
            Error::Io(_) | Error::Quadrature { .. } => EXIT_PARTIAL,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// `# key: value` metadata lines opening every emitted file.
pub struct Header {
    lines: Vec<String>,
}

impl Header {
    pub fn new(command: &str) -> Self {
        Header {
            lines: vec![
                format!("stochheat: {}", env!("CARGO_PKG_VERSION")),
                format!("command: {command}"),
            ],
        }
    }

    pub fn field(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.lines.push(format!("{key}: {value}"));
        self
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|l| format!("# {l}\n")).collect()
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_PARTIAL,
        message: format!("{}: {e}", path.display()),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_failure(path, e))
}

/// Writes header and body to `out`, or stdout.
pub fn emit(out: Option<&Path>, header: &Header, body: &str) -> Result<(), Failure> {
    let text = format!("{}{body}", header.render());
    match out {
        Some(p) => write_file(p, &text),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| io_failure(Path::new("<stdout>"), e)),
    }
}

/// Flag beats environment beats file beats the default.
pub fn out_dir(flag: Option<PathBuf>, from_file: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or(from_file)
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Runs `f` on a pool of `jobs` workers, or the global pool.
pub fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T, Failure> + Send) -> Result<T, Failure> {
    match jobs {
        None => f(),
        Some(0) => Err(Failure::config("--jobs: must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Failure::config(format!("--jobs: {e}")))?
            .install(f),
    }
}
