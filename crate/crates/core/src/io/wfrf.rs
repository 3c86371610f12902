//! WFRF: a self-describing container for raw channel data.
//!
//! Layout (all integers little-endian):
//!
//! | offset     | size | content                                        |
//! |------------|------|------------------------------------------------|
//! | 0          | 4    | magic `WFRF`                                   |
//! | 4          | 4    | format version, `u32` = 1                      |
//! | 8          | 4    | frame count, `u32`                             |
//! | 12         | 4    | metadata length `L` in bytes, `u32`            |
//! | 16         | L    | UTF-8 TOML metadata ([`WfrfMetadata`])         |
//! | 16 + L     | ...  | frames, each `n_tx * n_rx * n_samples` values  |
//!
//! Frame payloads are little-endian `f32` or `f64` (per metadata `dtype`),
//! ordered `[tx][rx][sample]` with the sample index fastest.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::config::ContextSpec;
use crate::model::{check_pair, AcquisitionContext, RfFrame};
use crate::scalar::{Dtype, Real};

pub const MAGIC: &[u8; 4] = b"WFRF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WfrfMetadata {
    pub dtype: Dtype,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_samples: usize,
    pub context: ContextSpec,
}

impl WfrfMetadata {
    fn frame_bytes(&self) -> u64 {
        (self.n_tx * self.n_rx * self.n_samples * self.dtype.size()) as u64
    }
}

/// Writes `frames` with their shared context. Shapes and the pairing with
/// `ctx` are checked before the file is created.
pub fn write_wfrf<T: Real>(path: impl AsRef<Path>, frames: &[RfFrame<T>], ctx: &AcquisitionContext) -> Result<()> {
    let path = path.as_ref();
    let (n_tx, n_rx, n_samples) = match frames.first() {
        Some(f) => f.shape(),
        None => (ctx.n_tx(), crate::environment::channel_count(ctx), 0),
    };
    for (i, f) in frames.iter().enumerate() {
        if f.shape() != (n_tx, n_rx, n_samples) {
            return Err(Error::metadata(
                "frames",
                format!("frame {i} has shape {:?}, expected {:?}", f.shape(), (n_tx, n_rx, n_samples)),
            ));
        }
        check_pair(f, ctx)?;
    }
    let count = u32::try_from(frames.len())
        .map_err(|_| Error::metadata("frames", "too many frames for a u32 count"))?;
    let meta = WfrfMetadata {
        dtype: T::DTYPE,
        n_tx,
        n_rx,
        n_samples,
        context: ContextSpec::from_context(ctx),
    };
    let meta_text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    let meta_len = u32::try_from(meta_text.len())
        .map_err(|_| Error::metadata("metadata", "metadata block too large"))?;

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(HEADER_LEN as usize);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&count.to_le_bytes());
    header.extend_from_slice(&meta_len.to_le_bytes());
    let io = |e| Error::io(path, e);
    w.write_all(&header).map_err(io)?;
    w.write_all(meta_text.as_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(n_samples * T::DTYPE.size());
    for f in frames {
        for lane in f.data().rows() {
            buf.clear();
            for &v in lane {
                v.write_le(&mut buf);
            }
            w.write_all(&buf).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Random-access reader; the header and metadata are checked on open.
pub struct WfrfReader {
    path: PathBuf,
    file: File,
    meta: WfrfMetadata,
    ctx: Arc<AcquisitionContext>,
    frame_count: usize,
    payload_start: u64,
}

impl WfrfReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(&path, e))?.len();

        let mut header = [0u8; HEADER_LEN as usize];
        let got = read_up_to(&mut file, &mut header).map_err(|e| Error::io(&path, e))?;
        if got >= 4 && &header[..4] != MAGIC {
            return Err(Error::format(0, "bad magic"));
        }
        if got < HEADER_LEN as usize {
            return Err(Error::format(got as u64, "truncated header"));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let frame_count = word(8) as usize;
        let meta_len = word(12) as u64;
        if file_len < HEADER_LEN + meta_len {
            return Err(Error::format(file_len, "truncated metadata block"));
        }
        let mut meta_bytes = vec![0u8; meta_len as usize];
        file.read_exact(&mut meta_bytes).map_err(|e| Error::io(&path, e))?;
        let text = std::str::from_utf8(&meta_bytes)
            .map_err(|e| Error::format(HEADER_LEN + e.valid_up_to() as u64, "metadata is not UTF-8"))?;
        let meta: WfrfMetadata = toml::from_str(text)
            .map_err(|e| Error::format(HEADER_LEN, format!("metadata: {}", e.message())))?;
        let ctx = meta
            .context
            .build()
            .map_err(|e| Error::format(HEADER_LEN, format!("metadata: {e}")))?;
        if meta.n_tx == 0 || meta.n_rx == 0 || meta.n_samples == 0 {
            if frame_count > 0 {
                return Err(Error::format(HEADER_LEN, "metadata declares an empty frame shape"));
            }
        } else {
            let probe = RfFrame::<f64>::zeros(meta.n_tx, meta.n_rx, 1)?;
            check_pair(&probe, &ctx).map_err(|e| Error::format(HEADER_LEN, format!("metadata: {e}")))?;
        }

        let payload_start = HEADER_LEN + meta_len;
        let expected = payload_start + frame_count as u64 * meta.frame_bytes();
        if file_len < expected {
            let incomplete = (file_len - payload_start) / meta.frame_bytes().max(1);
            return Err(Error::format(
                file_len,
                format!("truncated payload: frame {incomplete} of {frame_count} ends at byte {}", payload_start + (incomplete + 1) * meta.frame_bytes()),
            ));
        }
        if file_len > expected {
            return Err(Error::format(expected, "trailing bytes after last frame"));
        }
        Ok(WfrfReader {
            path,
            file,
            meta,
            ctx: Arc::new(ctx),
            frame_count,
            payload_start,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn metadata(&self) -> &WfrfMetadata {
        &self.meta
    }

    pub fn context(&self) -> &Arc<AcquisitionContext> {
        &self.ctx
    }

    /// Reads frame `index`, converting the stored dtype to `T`. `None` past
    /// the last frame.
    pub fn read_frame<T: Real>(&mut self, index: usize) -> Result<Option<RfFrame<T>>> {
        if index >= self.frame_count {
            return Ok(None);
        }
        let nbytes = self.meta.frame_bytes();
        let offset = self.payload_start + index as u64 * nbytes;
        let path = &self.path;
        self.file
            .seek(SeekFrom::Start(offset))
            .map_err(|e| Error::io(path, e))?;
        let mut bytes = vec![0u8; nbytes as usize];
        self.file.read_exact(&mut bytes).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format(offset, "truncated frame"),
            _ => Error::io(path, e),
        })?;
        let size = self.meta.dtype.size();
        let values: Vec<T> = match self.meta.dtype {
            Dtype::F32 => bytes.chunks_exact(size).map(|b| T::of_f64(f32::read_le(b) as f64)).collect(),
            Dtype::F64 => bytes.chunks_exact(size).map(|b| T::of_f64(f64::read_le(b))).collect(),
        };
        let data = Array3::from_shape_vec((self.meta.n_tx, self.meta.n_rx, self.meta.n_samples), values)
            .expect("payload length checked on open");
        RfFrame::new(data)
            .map(Some)
            .map_err(|e| Error::format(offset, format!("frame {index}: {e}")))
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}
