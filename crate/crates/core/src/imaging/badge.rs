//! Numbered circle badges drawn with a built-in 5x7 bitmap font.

use image::{Rgb, RgbImage};

const BADGE_FILL: Rgb<u8> = Rgb([0, 0, 0]);
const BADGE_RIM: Rgb<u8> = Rgb([255, 255, 255]);
const NUMERAL: Rgb<u8> = Rgb([255, 255, 255]);

// Rows top to bottom, 5 bits per row, MSB is the leftmost column.
const DIGITS: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
];

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Draws a filled circle of `diameter` px centred on `(cx, cy)` with
/// `number` written in white. Pixels outside the image are skipped.
pub fn draw_badge(img: &mut RgbImage, cx: i64, cy: i64, diameter: u32, number: usize) {
    let r = diameter as f64 / 2.0;
    let rim = (diameter as f64 / 16.0).max(1.0);
    let x0 = cx - diameter as i64 / 2 - 1;
    let y0 = cy - diameter as i64 / 2 - 1;
    for y in y0..=y0 + diameter as i64 + 2 {
        for x in x0..=x0 + diameter as i64 + 2 {
            let dx = x as f64 + 0.5 - cx as f64;
            let dy = y as f64 + 0.5 - cy as f64;
            let d = (dx * dx + dy * dy).sqrt();
            if d <= r - rim {
                put(img, x, y, BADGE_FILL);
            } else if d <= r {
                put(img, x, y, BADGE_RIM);
            }
        }
    }

    let digits: Vec<usize> = number
        .to_string()
        .bytes()
        .map(|b| (b - b'0') as usize)
        .collect();
    let n = digits.len() as u32;
    // Glyph cell is 5 wide plus 1 column of spacing; keep text inside ~70% of the circle.
    let budget = diameter as f64 * 0.7;
    let scale_w = budget / (6 * n - 1) as f64;
    let scale_h = budget / 7.0;
    let scale = scale_w.min(scale_h).floor().max(1.0) as i64;
    let text_w = (6 * n as i64 - 1) * scale;
    let text_h = 7 * scale;
    let left = cx - text_w / 2;
    let top = cy - text_h / 2;
    for (k, &digit) in digits.iter().enumerate() {
        let gx = left + k as i64 * 6 * scale;
        for (row, bits) in DIGITS[digit].iter().enumerate() {
            for col in 0..5 {
                if bits & (0x10 >> col) == 0 {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        put(
                            img,
                            gx + col * scale + sx,
                            top + row as i64 * scale + sy,
                            NUMERAL,
                        );
                    }
                }
            }
        }
    }
}
