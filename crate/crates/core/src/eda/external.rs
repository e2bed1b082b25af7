//! External-process EDA backend: runs configured command templates in a
//! scratch directory and parses the reports they leave behind.

use std::collections::BTreeMap;
use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use regex::Regex;

use crate::eda::report::{
    classify_sim_log, figures_to_report, parse_compile_errors, parse_synth_figures,
};
use crate::eda::{CompileOutcome, EdaBackend, EdaConfig, SimOutcome, SynthReport};
use crate::error::{Error, Result};

pub struct ExternalEda {
    cfg: EdaConfig,
    pass_re: Regex,
    fail_re: Regex,
}

struct CmdOutput {
    status_ok: bool,
    log: String,
}

impl ExternalEda {
    pub fn new(cfg: EdaConfig) -> Result<Self> {
        cfg.validate()?;
        let pass_re = Regex::new(&cfg.pass_pattern)
            .map_err(|e| Error::InvalidInput(format!("bad pass_pattern: {e}")))?;
        let fail_re = Regex::new(&cfg.fail_pattern)
            .map_err(|e| Error::InvalidInput(format!("bad fail_pattern: {e}")))?;
        Ok(ExternalEda {
            cfg,
            pass_re,
            fail_re,
        })
    }

    /// Writes the sources into a scratch dir and substitutes the command
    /// template placeholders.
    fn prepare(
        &self,
        code: &str,
        tb: Option<&str>,
    ) -> Result<(tempdir::Scratch, String, String, String)> {
        let scratch = tempdir::Scratch::new()?;
        let code_file = scratch.path().join("design.v");
        std::fs::write(&code_file, code)?;
        let tb_file = scratch.path().join("tb.v");
        if let Some(tb) = tb {
            std::fs::write(&tb_file, tb)?;
        }
        let out_dir = scratch.path().join("out");
        std::fs::create_dir_all(&out_dir)?;
        Ok((
            scratch,
            code_file.display().to_string(),
            tb_file.display().to_string(),
            out_dir.display().to_string(),
        ))
    }

    fn run(
        &self,
        template: &str,
        code_file: &str,
        tb_file: &str,
        out_dir: &str,
    ) -> Result<CmdOutput> {
        let cmdline = template
            .replace("{code_file}", code_file)
            .replace("{tb_file}", tb_file)
            .replace("{out_dir}", out_dir);
        run_with_timeout(&cmdline, Duration::from_secs(self.cfg.timeout_s))
    }
}

/// Runs a shell command, killing it after the timeout. Stdout and stderr are
/// drained on threads so a chatty tool cannot deadlock the pipe.
fn run_with_timeout(cmdline: &str, timeout: Duration) -> Result<CmdOutput> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmdline)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Tool(format!("failed to spawn `{cmdline}`: {e}")))?;

    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_handle = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stdout.read_to_string(&mut buf);
        buf
    });
    let err_handle = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });

    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {
                if start.elapsed() > timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::Tool(format!(
                        "`{cmdline}` timed out after {}s",
                        timeout.as_secs()
                    )));
                }
                std::thread::sleep(Duration::from_millis(25));
            }
            Err(e) => return Err(Error::Tool(format!("wait failed: {e}"))),
        }
    };

    let mut log = out_handle.join().unwrap_or_default();
    let err_text = err_handle.join().unwrap_or_default();
    if !err_text.is_empty() {
        if !log.is_empty() && !log.ends_with('\n') {
            log.push('\n');
        }
        log.push_str(&err_text);
    }
    Ok(CmdOutput {
        status_ok: status.success(),
        log,
    })
}

impl EdaBackend for ExternalEda {
    fn compile(&self, code: &str, tb: &str) -> Result<CompileOutcome> {
        let template = self.cfg.compile_cmd.as_deref().expect("validated");
        let (_scratch, code_file, tb_file, out_dir) = self.prepare(code, Some(tb))?;
        let output = self.run(template, &code_file, &tb_file, &out_dir)?;
        let errors = if output.status_ok {
            vec![]
        } else {
            parse_compile_errors(&output.log)
        };
        Ok(CompileOutcome {
            ok: output.status_ok,
            errors,
            log: output.log,
        })
    }

    fn simulate(&self, code: &str, tb: &str) -> Result<SimOutcome> {
        let template = self.cfg.sim_cmd.as_deref().expect("validated");
        let (_scratch, code_file, tb_file, out_dir) = self.prepare(code, Some(tb))?;
        let output = self.run(template, &code_file, &tb_file, &out_dir)?;
        let passed = classify_sim_log(&output.log, &self.pass_re, &self.fail_re)?;
        let failures = if passed {
            vec![]
        } else {
            let mut lines: Vec<String> = output
                .log
                .lines()
                .filter(|l| self.fail_re.is_match(l))
                .map(|l| format!("simulation failure: {}", l.trim()))
                .collect();
            if lines.is_empty() {
                lines.push("simulation failed".into());
            }
            lines
        };
        Ok(SimOutcome {
            passed,
            log: output.log,
            failures,
        })
    }

    fn synthesize(&self, code: &str) -> Result<SynthReport> {
        let template = self.cfg.synth_cmd.as_deref().expect("validated");
        let (scratch, code_file, tb_file, out_dir) = self.prepare(code, None)?;
        let output = self.run(template, &code_file, &tb_file, &out_dir)?;
        if !output.status_ok {
            return Err(Error::Tool(format!(
                "synthesis command failed:\n{}",
                output.log
            )));
        }

        let mut sections = BTreeMap::new();
        for (section, file) in &self.cfg.section_files {
            let path = scratch.path().join("out").join(file);
            if let Ok(text) = std::fs::read_to_string(&path) {
                sections.insert(section.clone(), text);
            }
        }
        // tools that print everything to stdout still get parsed
        if !output.log.trim().is_empty() {
            sections.entry("stdout".to_string()).or_insert(output.log);
        }

        let figures = parse_synth_figures(&sections, &self.cfg.labels)?;
        figures_to_report(&figures, sections)
    }
}

/// Tiny scoped scratch directory; removed on drop.
mod tempdir {
    use std::path::{Path, PathBuf};
    use std::sync::atomic::{AtomicU64, Ordering};

    static COUNTER: AtomicU64 = AtomicU64::new(0);

    pub struct Scratch {
        path: PathBuf,
    }

    impl Scratch {
        pub fn new() -> std::io::Result<Self> {
            let nonce = COUNTER.fetch_add(1, Ordering::Relaxed);
            let path =
                std::env::temp_dir().join(format!("rtlsquad-eda-{}-{}", std::process::id(), nonce));
            std::fs::create_dir_all(&path)?;
            Ok(Scratch { path })
        }

        pub fn path(&self) -> &Path {
            &self.path
        }
    }

    impl Drop for Scratch {
        fn drop(&mut self) {
            let _ = std::fs::remove_dir_all(&self.path);
        }
    }
}
