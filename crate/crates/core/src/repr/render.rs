use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::pianoroll::Pianoroll;

const BACKGROUND: u8 = 255;
const ACTIVE: u8 = 0;
const BAR_LINE: u8 = 192;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("cannot write image: {0}")]
    Io(#[from] std::io::Error),
}

/// Grayscale raster of a roll: one column per timestamp, one row per pitch
/// with pitch 127 on the top row. Active cells are black; inactive cells on
/// an interior bar boundary are light gray.
pub fn render_pianoroll(roll: &Pianoroll) -> (usize, usize, Vec<u8>) {
    let (width, height) = (roll.len(), 128);
    let bar = roll.bar_len();
    let mut pixels = vec![BACKGROUND; width * height];
    for (t, frame) in roll.rows().iter().enumerate() {
        let on_bar_line = t > 0 && t % bar == 0;
        for row in 0..height {
            let pitch = (127 - row) as u8;
            let px = &mut pixels[row * width + t];
            if frame.contains(pitch) {
                *px = ACTIVE;
            } else if on_bar_line {
                *px = BAR_LINE;
            }
        }
    }
    (width, height, pixels)
}

/// Writes the rendering as a binary PGM (P5).
pub fn write_pgm(roll: &Pianoroll, path: &Path) -> Result<(), RenderError> {
    let (width, height, pixels) = render_pianoroll(roll);
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(file, "P5\n{width} {height}\n255\n")?;
    file.write_all(&pixels)?;
    file.flush()?;
    Ok(())
}
