use std::sync::{Arc, OnceLock};

use resvg::{tiny_skia, usvg};

use super::svg::FONT;
use super::RenderError;

pub const PNG_DPI: f32 = 200.0;

fn fonts() -> Arc<usvg::fontdb::Database> {
    static DB: OnceLock<Arc<usvg::fontdb::Database>> = OnceLock::new();
    DB.get_or_init(|| {
        let mut db = usvg::fontdb::Database::new();
        db.load_system_fonts();
        Arc::new(db)
    })
    .clone()
}

/// Rasterizes SVG text at [`PNG_DPI`].
pub fn svg_to_png(svg_text: &str) -> Result<Vec<u8>, RenderError> {
    let mut opt = usvg::Options {
        font_family: FONT.to_string(),
        ..usvg::Options::default()
    };
    opt.fontdb = fonts();
    let tree = usvg::Tree::from_str(svg_text, &opt).map_err(|e| RenderError::Raster(e.to_string()))?;
    // usvg resolves inch sizes at 96 user units per inch
    let scale = PNG_DPI / opt.dpi;
    let size = tree.size();
    let (w, h) = ((size.width() * scale).ceil() as u32, (size.height() * scale).ceil() as u32);
    let mut pixmap =
        tiny_skia::Pixmap::new(w.max(1), h.max(1)).ok_or_else(|| RenderError::Raster(format!("bad size {w}x{h}")))?;
    resvg::render(&tree, tiny_skia::Transform::from_scale(scale, scale), &mut pixmap.as_mut());
    pixmap.encode_png().map_err(|e| RenderError::Raster(e.to_string()))
}
