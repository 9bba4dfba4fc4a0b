use serde::Deserialize;

use super::{Sketch, SketchRecord};
use crate::error::{Error, Result};

/// Raw QuickDraw export: absolute coordinates, one `[[x...], [y...], (t...)]` per stroke.
#[derive(Deserialize)]
struct RawDrawing {
    #[serde(default)]
    word: Option<String>,
    drawing: Vec<Vec<Vec<f64>>>,
}

/// Convert newline-delimited QuickDraw records into interchange records.
///
/// Empty strokes are skipped with a warning. Returns the records and the number of
/// strokes skipped.
pub fn import_quickdraw(text: &str, max_segments: usize) -> Result<(Vec<SketchRecord>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno + 1,
            message,
        };
        let raw: RawDrawing = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let mut strokes = Vec::with_capacity(raw.drawing.len());
        for (k, stroke) in raw.drawing.iter().enumerate() {
            if stroke.len() < 2 {
                return Err(parse_err(format!("stroke {k} needs x and y arrays")));
            }
            let (xs, ys) = (&stroke[0], &stroke[1]);
            if xs.len() != ys.len() {
                return Err(parse_err(format!(
                    "stroke {k} has {} x values and {} y values",
                    xs.len(),
                    ys.len()
                )));
            }
            if xs.is_empty() {
                log::warn!("line {}: skipping empty stroke {k}", lineno + 1);
                skipped += 1;
                continue;
            }
            strokes.push(
                xs.iter()
                    .copied()
                    .zip(ys.iter().copied())
                    .collect::<Vec<_>>(),
            );
        }
        if strokes.is_empty() {
            return Err(parse_err("drawing has no points".into()));
        }
        let index = out.len();
        let sketch = Sketch::from_strokes(&strokes, raw.word, max_segments)
            .map_err(|e| Error::at_record(index, e))?;
        out.push(SketchRecord::new(sketch, None));
    }
    Ok((out, skipped))
}
