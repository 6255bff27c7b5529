use ndarray::{s, Array3, ArrayView3};

/// Bilinear resize with half-pixel centers. A same-size resize is an exact copy.
pub fn resize_bilinear(img: ArrayView3<f32>, out_h: usize, out_w: usize) -> Array3<f32> {
    let (c, h, w) = img.dim();
    if (h, w) == (out_h, out_w) {
        return img.to_owned();
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f32 / n_out as f32;
        (0..n_out)
            .map(|i| {
                let src = ((i as f32 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f32);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, src - i0 as f32)
            })
            .collect()
    };
    let ys = axis(h, out_h);
    let xs = axis(w, out_w);
    let mut out = Array3::<f32>::zeros((c, out_h, out_w));
    for ch in 0..c {
        let plane = img.slice(s![ch, .., ..]);
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = plane[[y0, x0]] * (1.0 - fx) + plane[[y0, x1]] * fx;
                let bot = plane[[y1, x0]] * (1.0 - fx) + plane[[y1, x1]] * fx;
                out[[ch, oy, ox]] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// Separable Gaussian blur with edge clamping, radius ⌈3σ⌉.
pub fn gaussian_blur(img: &Array3<f32>, sigma: f32) -> Array3<f32> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f32> = (-radius..=radius)
        .map(|d| (-(d * d) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (c, h, w) = img.dim();
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = Array3::<f32>::zeros((c, h, w));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                tmp[[ch, y, x]] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * img[[ch, y, clamp(x as i64 + k as i64 - radius, w)]])
                    .sum();
            }
        }
    }
    let mut out = Array3::<f32>::zeros((c, h, w));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[[ch, y, x]] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * tmp[[ch, clamp(y as i64 + k as i64 - radius, h), x]])
                    .sum();
            }
        }
    }
    out
}
