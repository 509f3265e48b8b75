use std::fmt::Display;
use std::io::Write;
use std::sync::{Arc, Mutex};

/// Line-oriented event log: `event.name key=value key=value`.
///
/// Values containing whitespace, `=` or quotes are written in Rust debug
/// quoting so each line splits unambiguously.
#[derive(Clone)]
pub struct Logger {
    out: Arc<Mutex<Box<dyn Write + Send>>>,
}

impl Logger {
    pub fn stdout() -> Self {
        Logger::to_writer(std::io::stdout())
    }

    pub fn to_writer(w: impl Write + Send + 'static) -> Self {
        Logger { out: Arc::new(Mutex::new(Box::new(w))) }
    }

    /// A logger that appends to a shared in-memory buffer.
    pub fn capture() -> (Self, Captured) {
        let buf = Captured::default();
        (Logger::to_writer(buf.clone()), buf)
    }

    pub fn event(&self, name: &str, fields: &[(&str, &dyn Display)]) {
        let mut line = String::from(name);
        for (k, v) in fields {
            let v = v.to_string();
            if v.is_empty() || v.contains(|c: char| c.is_whitespace() || c == '=' || c == '"') {
                line.push_str(&format!(" {k}={v:?}"));
            } else {
                line.push_str(&format!(" {k}={v}"));
            }
        }
        line.push('\n');
        let mut out = self.out.lock().unwrap_or_else(|p| p.into_inner());
        let _ = out.write_all(line.as_bytes());
        let _ = out.flush();
    }
}

#[derive(Clone, Default)]
pub struct Captured(Arc<Mutex<Vec<u8>>>);

impl Captured {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.0.lock().unwrap_or_else(|p| p.into_inner())).into_owned()
    }

    /// Lines starting with `event`.
    pub fn events(&self, event: &str) -> Vec<String> {
        self.text().lines().filter(|l| l.split(' ').next() == Some(event)).map(str::to_owned).collect()
    }
}

impl Write for Captured {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
