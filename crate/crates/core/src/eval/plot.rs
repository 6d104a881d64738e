//! Line plots of sweep medians, drawn directly into an RGB image.

use image::{Rgb, RgbImage};

use nalgebra::Point2;

use super::metrics::Metric;
use super::sweep::SummaryRow;
use crate::geometry::ScaleConfig;
use crate::heatmap::HeatmapStack;

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: i64 = 40;

const PALETTE: [[u8; 3]; 6] = [
    [214, 39, 40],
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
    [23, 190, 207],
];

fn draw_line(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), colour: Rgb<u8>) {
    let (mut x, mut y) = a;
    let (dx, dy) = ((b.0 - a.0).abs(), -(b.1 - a.1).abs());
    let (sx, sy) = (if a.0 < b.0 { 1 } else { -1 }, if a.1 < b.1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, colour);
        }
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_marker(img: &mut RgbImage, c: (i64, i64), colour: Rgb<u8>) {
    for d in -2..=2 {
        draw_line(img, (c.0 - 2, c.1 + d), (c.0 + 2, c.1 + d), colour);
    }
}

/// One panel: median `metric` against visibility bucket, one line per `s`
/// in `PALETTE` order. The x axis runs from 1.0 on the left down to
/// `floor`, with a tick every 0.1; the y axis starts at 0 and has a tick at
/// each tenth of the largest median.
pub fn plot_metric(rows: &[SummaryRow], s_values: &[f64], metric: Metric, floor: f64) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let axis = Rgb([0, 0, 0]);
    let (x0, x1) = (MARGIN, WIDTH as i64 - MARGIN);
    let (y0, y1) = (HEIGHT as i64 - MARGIN, MARGIN);
    draw_line(&mut img, (x0, y0), (x1, y0), axis);
    draw_line(&mut img, (x0, y0), (x0, y1), axis);

    let lo = floor.min(1.0 - 1e-9);
    let x_of = |b: f64| x0 + ((1.0 - b) / (1.0 - lo) * (x1 - x0) as f64).round() as i64;
    let ymax = rows
        .iter()
        .filter(|r| r.metric == metric && r.median.is_finite())
        .map(|r| r.median)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let y_of = |v: f64| y0 - (v / ymax * (y0 - y1) as f64).round() as i64;
    let mut t = 1.0;
    while t >= lo - 1e-9 {
        let x = x_of(t);
        draw_line(&mut img, (x, y0), (x, y0 + 5), axis);
        t -= 0.1;
    }
    for i in 1..=10 {
        let y = y_of(ymax * i as f64 / 10.0);
        draw_line(&mut img, (x0 - 5, y), (x0, y), axis);
    }

    for (i, s) in s_values.iter().enumerate() {
        let colour = Rgb(PALETTE[i % PALETTE.len()]);
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.metric == metric && (r.s - s).abs() < 1e-12 && r.median.is_finite())
            .map(|r| (r.bucket, r.median))
            .collect();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        let pix: Vec<(i64, i64)> = pts.iter().map(|&(b, v)| (x_of(b), y_of(v))).collect();
        for w in pix.windows(2) {
            draw_line(&mut img, w[0], w[1], colour);
        }
        for &p in &pix {
            draw_marker(&mut img, p, colour);
        }
    }
    img
}

fn draw_cross(img: &mut RgbImage, p: &Point2<f64>, size: i64, colour: Rgb<u8>) {
    let c = (p.x.round() as i64, p.y.round() as i64);
    draw_line(img, (c.0 - size, c.1 - size), (c.0 + size, c.1 + size), colour);
    draw_line(img, (c.0 - size, c.1 + size), (c.0 + size, c.1 - size), colour);
}

/// Heatmap-space overlay of one frame: the channel-wise maximum of `stack`
/// in grey, the camera image's outline in blue, `truth` points as green
/// crosses and `estimate` points as red crosses joined in model order.
/// Points are heatmap-space coordinates; `None` entries are skipped.
pub fn overlay(
    stack: &HeatmapStack,
    scale: &ScaleConfig,
    truth: &[Option<Point2<f64>>],
    estimate: &[Option<Point2<f64>>],
) -> RgbImage {
    let (w, h) = (stack.width(), stack.height());
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let v = (0..stack.channels()).map(|c| stack.get(c, x, y)).fold(0.0f32, f32::max);
            let g = (v.clamp(0.0, 1.0) * 200.0) as u8;
            img.put_pixel(x as u32, y as u32, Rgb([g, g, g]));
        }
    }
    let (iw, ih) = scale.image_dims();
    let corners = [(-0.5, -0.5), (iw as f64 - 0.5, -0.5), (iw as f64 - 0.5, ih as f64 - 0.5), (-0.5, ih as f64 - 0.5)]
        .map(|(x, y)| scale.to_heatmap_space(&Point2::new(x, y)));
    let blue = Rgb([60, 120, 255]);
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        draw_line(
            &mut img,
            (a.x.round() as i64, a.y.round() as i64),
            (b.x.round() as i64, b.y.round() as i64),
            blue,
        );
    }
    for p in truth.iter().flatten() {
        draw_cross(&mut img, p, 4, Rgb([40, 220, 40]));
    }
    let red = Rgb([230, 40, 40]);
    let est: Vec<Point2<f64>> = estimate.iter().flatten().copied().collect();
    for pair in est.windows(2) {
        let clamp = |p: &Point2<f64>| (p.x.clamp(-1e6, 1e6).round() as i64, p.y.clamp(-1e6, 1e6).round() as i64);
        draw_line(&mut img, clamp(&pair[0]), clamp(&pair[1]), Rgb([150, 30, 30]));
    }
    for p in &est {
        draw_cross(&mut img, p, 3, red);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_are_drawn_in_series_colours() {
        let rows: Vec<SummaryRow> = [(1.0, 1.0, 1.0), (1.0, 0.5, 4.0), (0.5, 1.0, 1.5), (0.5, 0.5, 2.0)]
            .iter()
            .map(|&(s, bucket, median)| SummaryRow {
                s,
                bucket,
                metric: Metric::Rotation,
                median,
                count: 1,
                failures: 0,
            })
            .collect();
        let img = plot_metric(&rows, &[1.0, 0.5], Metric::Rotation, 0.3);
        for colour in &PALETTE[..2] {
            assert!(img.pixels().any(|p| p.0 == *colour));
        }
        assert!(!img.pixels().any(|p| p.0 == PALETTE[2]));
        // highest median touches the top margin
        assert!((0..WIDTH).any(|x| img.get_pixel(x, MARGIN as u32).0 == PALETTE[0]));
    }

    #[test]
    fn overlay_marks_points_and_image_outline() {
        let scale = ScaleConfig::square(0.5, 64).unwrap();
        let stack = crate::heatmap::render_labels(&[Point2::new(20.0, 30.0)], 2.0, (64, 64), 0.5);
        let img = overlay(&stack, &scale, &[Some(Point2::new(20.0, 30.0))], &[Some(Point2::new(40.0, 40.0)), None]);
        assert_eq!(img.get_pixel(20, 30).0, [40, 220, 40]);
        assert_eq!(img.get_pixel(40, 40).0, [230, 40, 40]);
        // image outline at heatmap x = 0.5 * -0.5 + 16 = 15.75
        assert_eq!(img.get_pixel(16, 16).0, [60, 120, 255]);
        assert_eq!(img.get_pixel(30, 20).0[0], img.get_pixel(30, 20).0[1]);
    }
}
