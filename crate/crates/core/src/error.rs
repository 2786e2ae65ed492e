use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = KccError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KccError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: Vec<u8> },

    #[error("unsupported format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("checksum mismatch in entry `{entry}`: stored {stored:08x}, computed {computed:08x}")]
    Checksum {
        entry: String,
        stored: u32,
        computed: u32,
    },

    #[error("truncated file: need {needed} bytes, found {found}")]
    Truncated { needed: u64, found: u64 },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite token in `{0}`")]
    NonFinite(String),

    #[error("no foreground in image `{0}`")]
    NoForeground(String),

    #[error("cannot summarize image `{0}`: no keypoints and no class token")]
    CannotSummarize(String),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("config drift: expected fingerprint {expected}, found {found}")]
    ConfigDrift { expected: String, found: String },

    #[error("image `{image_id}`: {source}")]
    Image {
        image_id: String,
        #[source]
        source: Box<KccError>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing image file for `{image_id}`: {path}")]
    MissingImage { image_id: String, path: PathBuf },
}

impl KccError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KccError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_image(image_id: &str, err: KccError) -> Self {
        KccError::Image {
            image_id: image_id.to_string(),
            source: Box::new(err),
        }
    }

    /// The innermost error, with any per-image context stripped.
    pub fn root(&self) -> &KccError {
        match self {
            KccError::Image { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        matches!(self.root(), KccError::Io { .. } | KccError::MissingImage { .. })
    }
}
