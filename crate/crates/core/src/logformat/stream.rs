use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::text::{parse_impression_at, write_impression, HEADER_TOKEN};
use super::{ImpressionRecord, LogError};

/// How the reader reacts to a malformed impression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Yield the error and stop.
    #[default]
    Strict,
    /// Yield the error, skip to the next `example` header and keep going.
    Lenient,
}

/// Lazily parses impressions from a byte stream, one record in memory at a
/// time. Errors carry the 0-based impression index.
pub struct ImpressionReader<R> {
    lines: io::Lines<R>,
    mode: ParseMode,
    line_no: usize,
    pending: Option<(usize, String)>,
    index: usize,
    done: bool,
}

impl<R: BufRead> ImpressionReader<R> {
    pub fn new(source: R, mode: ParseMode) -> Self {
        Self {
            lines: source.lines(),
            mode,
            line_no: 0,
            pending: None,
            index: 0,
            done: false,
        }
    }

    fn next_line(&mut self) -> Option<io::Result<(usize, String)>> {
        if let Some(p) = self.pending.take() {
            return Some(Ok(p));
        }
        loop {
            match self.lines.next()? {
                Ok(line) => {
                    self.line_no += 1;
                    if line.trim().is_empty() {
                        continue;
                    }
                    return Some(Ok((self.line_no, line)));
                }
                Err(e) => return Some(Err(e)),
            }
        }
    }

    /// Collects one header line and every following line up to the next
    /// header.
    fn next_group(&mut self) -> Option<io::Result<(usize, Vec<String>)>> {
        let (first, header) = match self.next_line()? {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let mut group = vec![header];
        loop {
            match self.next_line() {
                None => break,
                Some(Err(e)) => return Some(Err(e)),
                Some(Ok((no, line))) => {
                    if is_header(&line) {
                        self.pending = Some((no, line));
                        break;
                    }
                    group.push(line);
                }
            }
        }
        Some(Ok((first, group)))
    }
}

fn is_header(line: &str) -> bool {
    line.split_ascii_whitespace().next() == Some(HEADER_TOKEN)
}

impl<R: BufRead> Iterator for ImpressionReader<R> {
    type Item = Result<ImpressionRecord, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let index = self.index;
        let result = match self.next_group()? {
            Err(e) => {
                self.done = true;
                Err(LogError::at(index, LogError::Io(e)))
            }
            Ok((first, group)) => {
                parse_impression_at(&group, first).map_err(|e| LogError::at(index, e))
            }
        };
        self.index += 1;
        if result.is_err() && self.mode == ParseMode::Strict {
            self.done = true;
        }
        Some(result)
    }
}

/// Wraps a byte stream, optionally gzip-compressed, into an impression reader.
pub fn stream_impressions<'a, R: Read + 'a>(
    source: R,
    compressed: bool,
    mode: ParseMode,
) -> ImpressionReader<Box<dyn BufRead + 'a>> {
    let reader: Box<dyn BufRead + 'a> = if compressed {
        Box::new(BufReader::new(MultiGzDecoder::new(source)))
    } else {
        Box::new(BufReader::new(source))
    };
    ImpressionReader::new(reader, mode)
}

/// Opens a log file, detecting gzip from its magic bytes.
pub fn open_log(
    path: &Path,
    mode: ParseMode,
) -> Result<ImpressionReader<Box<dyn BufRead>>, LogError> {
    let mut file = BufReader::new(File::open(path)?);
    let compressed = file.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    Ok(stream_impressions(file, compressed, mode))
}

/// Reads a whole log, returning the records and any per-record diagnostics.
/// In strict mode the first diagnostic is returned as an error.
pub fn read_log(
    path: &Path,
    mode: ParseMode,
) -> Result<(Vec<ImpressionRecord>, Vec<LogError>), LogError> {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for item in open_log(path, mode)? {
        match item {
            Ok(r) => records.push(r),
            Err(e) if mode == ParseMode::Strict => return Err(e),
            Err(e) => diagnostics.push(e),
        }
    }
    Ok((records, diagnostics))
}

/// Serializes impressions to a file or any writer, optionally gzipped.
pub struct LogWriter<W: Write> {
    inner: Sink<W>,
    written: usize,
}

enum Sink<W: Write> {
    Plain(W),
    Gzip(GzEncoder<W>),
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W, compressed: bool) -> Self {
        let inner = if compressed {
            Sink::Gzip(GzEncoder::new(out, Compression::default()))
        } else {
            Sink::Plain(out)
        };
        Self { inner, written: 0 }
    }

    pub fn write(&mut self, r: &ImpressionRecord) -> Result<(), LogError> {
        match &mut self.inner {
            Sink::Plain(w) => write_impression(w, r)?,
            Sink::Gzip(w) => write_impression(w, r)?,
        }
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    /// Flushes and returns the underlying writer.
    pub fn finish(self) -> Result<W, LogError> {
        match self.inner {
            Sink::Plain(mut w) => {
                w.flush()?;
                Ok(w)
            }
            Sink::Gzip(w) => {
                let mut w = w.finish()?;
                w.flush()?;
                Ok(w)
            }
        }
    }
}

impl LogWriter<BufWriter<File>> {
    /// Creates a log file; a `.gz` extension selects gzip.
    pub fn create(path: &Path) -> Result<Self, LogError> {
        let compressed = path.extension().is_some_and(|e| e == "gz");
        Ok(Self::new(BufWriter::new(File::create(path)?), compressed))
    }
}
