use image::RgbImage;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PixelScaling {
    #[default]
    #[serde(rename = "raw_0_255")]
    Raw,
    #[serde(rename = "unit_0_1")]
    Unit,
}

/// Model input in height x width x RGB order.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl InputTensor {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height as usize, self.width as usize, 3]
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// Serializes as nested `[[[r, g, b], ...], ...]` rows.
impl Serialize for InputTensor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Row<'a>(&'a [f32]);
        impl Serialize for Row<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut seq = s.serialize_seq(Some(self.0.len() / 3))?;
                for px in self.0.chunks_exact(3) {
                    seq.serialize_element(px)?;
                }
                seq.end()
            }
        }
        let row_len = self.width as usize * 3;
        let mut seq = s.serialize_seq(Some(self.height as usize))?;
        for row in self.data.chunks_exact(row_len) {
            seq.serialize_element(&Row(row))?;
        }
        seq.end()
    }
}

/// Bilinear resize to `width` x `height` with pixel-centre alignment, then
/// scale channel values.
pub fn preprocess(img: &RgbImage, width: u32, height: u32, scaling: PixelScaling) -> InputTensor {
    let (sw, sh) = img.dimensions();
    let divisor = match scaling {
        PixelScaling::Raw => 1.0,
        PixelScaling::Unit => 255.0,
    };
    let xs = sample_axis(sw, width);
    let ys = sample_axis(sh, height);
    let mut data = Vec::with_capacity(width as usize * height as usize * 3);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let (a, b) = (img.get_pixel(x0, y0).0, img.get_pixel(x1, y0).0);
            let (c, d) = (img.get_pixel(x0, y1).0, img.get_pixel(x1, y1).0);
            for ch in 0..3 {
                let top = lerp(f32::from(a[ch]), f32::from(b[ch]), tx);
                let bottom = lerp(f32::from(c[ch]), f32::from(d[ch]), tx);
                data.push(lerp(top, bottom, ty) / divisor);
            }
        }
    }
    InputTensor { width, height, data }
}

// a + (b - a) t is exact when a == b, which keeps flat regions flat.
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

/// For each output index: the two source indices and the blend weight.
fn sample_axis(src: u32, dst: u32) -> Vec<(u32, u32, f32)> {
    let ratio = f64::from(src) / f64::from(dst);
    (0..dst)
        .map(|i| {
            let pos = ((f64::from(i) + 0.5) * ratio - 0.5).clamp(0.0, f64::from(src - 1));
            let lo = pos.floor() as u32;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, (pos - f64::from(lo)) as f32)
        })
        .collect()
}
