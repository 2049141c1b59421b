//! Helper that shells out to `ffmpeg` to turn a video file into a frame
//! directory readable by [`super::FrameSource`].

use std::path::{Path, PathBuf};
use std::process::Command;

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("failed to launch {program}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{program} exited with {status}: {stderr}")]
    Failed {
        program: String,
        status: std::process::ExitStatus,
        stderr: String,
    },
    #[error("cannot create {path}: {source}")]
    OutputDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Decodes `video` into `out_dir/frame_%06d.png` at `fps`, numbering from 0.
///
/// `program` is normally `"ffmpeg"`; it is a parameter so callers can point at
/// a specific build.
pub fn extract_frames(
    program: &str,
    video: &Path,
    out_dir: &Path,
    fps: f64,
) -> Result<(), ExtractError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ExtractError::OutputDir {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let output = Command::new(program)
        .arg("-hide_banner")
        .args(["-loglevel", "error", "-y", "-i"])
        .arg(video)
        .args(["-vf", &format!("fps={fps}"), "-start_number", "0"])
        .arg(out_dir.join(super::DEFAULT_PATTERN))
        .output()
        .map_err(|source| ExtractError::Spawn {
            program: program.to_string(),
            source,
        })?;
    if !output.status.success() {
        return Err(ExtractError::Failed {
            program: program.to_string(),
            status: output.status,
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    Ok(())
}
