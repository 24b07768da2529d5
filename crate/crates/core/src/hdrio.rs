//! Radiance RGBE, PFM, binary PPM and 16-bit PGM readers and writers.
//! Byte layouts are described in `docs/formats.md`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imgcore::Plane;

fn fmt_err(format: &'static str, msg: impl Into<String>) -> Error {
    Error::Format {
        format,
        msg: msg.into(),
    }
}

const MAX_DIM: usize = 1 << 20;

// ---------------------------------------------------------------- RGBE

/// Shared-exponent encoding of one RGB triple.
pub fn rgbe_encode(rgb: [f64; 3]) -> [u8; 4] {
    let m = rgb[0].max(rgb[1]).max(rgb[2]);
    if !(m >= 1e-32) {
        return [0; 4];
    }
    // m = f · 2^e with f in [0.5, 1)
    let mut e = m.log2().floor() as i32 + 1;
    if m / 2f64.powi(e) >= 1.0 {
        e += 1;
    } else if m / 2f64.powi(e) < 0.5 {
        e -= 1;
    }
    if e + 128 < 1 {
        return [0; 4];
    }
    let e = e.min(127);
    let scale = 2f64.powi(8 - e);
    let q = |v: f64| (v.max(0.0) * scale).floor().min(255.0) as u8;
    [q(rgb[0]), q(rgb[1]), q(rgb[2]), (e + 128) as u8]
}

/// Decodes with the half-step offset; exponent byte 0 is exact zero.
pub fn rgbe_decode(p: [u8; 4]) -> [f64; 3] {
    if p[3] == 0 {
        return [0.0; 3];
    }
    let f = 2f64.powi(p[3] as i32 - 136);
    [
        (p[0] as f64 + 0.5) * f,
        (p[1] as f64 + 0.5) * f,
        (p[2] as f64 + 0.5) * f,
    ]
}

fn encode_rle_component(data: &[u8], out: &mut Vec<u8>) {
    let n = data.len();
    let mut i = 0;
    while i < n {
        let mut run = 1;
        while i + run < n && run < 127 && data[i + run] == data[i] {
            run += 1;
        }
        if run >= 3 {
            out.push(128 + run as u8);
            out.push(data[i]);
            i += run;
            continue;
        }
        // literal span up to the next run of three or more
        let start = i;
        while i < n && i - start < 128 {
            if i + 2 < n && data[i] == data[i + 1] && data[i] == data[i + 2] {
                break;
            }
            i += 1;
        }
        out.push((i - start) as u8);
        out.extend_from_slice(&data[start..i]);
    }
}

pub fn encode_hdr(img: &Plane) -> Result<Vec<u8>> {
    let (h, w, c) = img.dims();
    if c != 3 {
        return Err(fmt_err("rgbe", format!("expected 3 channels, got {c}")));
    }
    if !img.is_finite() || img.data().iter().any(|&v| v < 0.0) {
        return Err(fmt_err("rgbe", "values must be finite and nonnegative"));
    }
    let mut out = format!("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {h} +X {w}\n").into_bytes();
    let rle = (8..=32767).contains(&w);
    let mut comps = vec![[0u8; 4]; w];
    let mut plane = vec![0u8; w];
    for y in 0..h {
        for (x, q) in comps.iter_mut().enumerate() {
            let px = img.pixel(y, x);
            *q = rgbe_encode([px[0], px[1], px[2]]);
        }
        if rle {
            out.extend_from_slice(&[2, 2, (w >> 8) as u8, (w & 0xff) as u8]);
            for k in 0..4 {
                for (dst, q) in plane.iter_mut().zip(&comps) {
                    *dst = q[k];
                }
                encode_rle_component(&plane, &mut out);
            }
        } else {
            for q in &comps {
                out.extend_from_slice(q);
            }
        }
    }
    Ok(out)
}

fn read_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos] != b'\n' {
        *pos += 1;
    }
    let line = &bytes[start..*pos];
    *pos += 1;
    Some(line)
}

/// Decodes a Radiance file. `EXPOSURE` and other informational header
/// lines are ignored; pixel values are returned as stored.
pub fn decode_hdr(bytes: &[u8]) -> Result<Plane> {
    let e = |m: &str| fmt_err("rgbe", m.to_string());
    let mut pos = 0;
    let magic = read_line(bytes, &mut pos).ok_or_else(|| e("empty file"))?;
    if !magic.starts_with(b"#?") {
        return Err(e("bad magic"));
    }
    let mut format_ok = false;
    loop {
        let line = read_line(bytes, &mut pos).ok_or_else(|| e("truncated header"))?;
        if line.is_empty() {
            break;
        }
        if let Some(v) = line.strip_prefix(b"FORMAT=") {
            if v.trim_ascii() != b"32-bit_rle_rgbe" {
                return Err(e(&format!("unsupported format {}", String::from_utf8_lossy(v))));
            }
            format_ok = true;
        }
    }
    if !format_ok {
        return Err(e("missing FORMAT=32-bit_rle_rgbe"));
    }
    let res = read_line(bytes, &mut pos).ok_or_else(|| e("missing resolution line"))?;
    let res = String::from_utf8_lossy(res);
    let toks: Vec<&str> = res.split_whitespace().collect();
    let (h, w) = match toks.as_slice() {
        ["-Y", h, "+X", w] => (
            h.parse::<usize>().map_err(|_| e("bad height"))?,
            w.parse::<usize>().map_err(|_| e("bad width"))?,
        ),
        _ => return Err(e(&format!("unsupported pixel order {res:?}"))),
    };
    if h == 0 || w == 0 || h > MAX_DIM || w > MAX_DIM {
        return Err(e("image dimensions out of range"));
    }

    let mut data = Vec::with_capacity(h * w * 3);
    let mut scan = vec![[0u8; 4]; w];
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(fmt_err("rgbe", "truncated scanline"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    for _ in 0..h {
        let head = take(&mut pos, 4)?;
        let new_rle = (8..=32767).contains(&w)
            && head[0] == 2
            && head[1] == 2
            && head[2] & 0x80 == 0
            && ((head[2] as usize) << 8 | head[3] as usize) == w;
        if new_rle {
            for k in 0..4 {
                let mut x = 0;
                while x < w {
                    let count = take(&mut pos, 1)?[0] as usize;
                    if count > 128 {
                        let n = count - 128;
                        let v = take(&mut pos, 1)?[0];
                        if x + n > w {
                            return Err(e("run overflows scanline"));
                        }
                        scan[x..x + n].iter_mut().for_each(|p| p[k] = v);
                        x += n;
                    } else {
                        if count == 0 || x + count > w {
                            return Err(e("bad literal count"));
                        }
                        let lit = take(&mut pos, count)?;
                        for (p, &v) in scan[x..x + count].iter_mut().zip(lit) {
                            p[k] = v;
                        }
                        x += count;
                    }
                }
            }
        } else {
            // flat pixels, possibly with old-style (1,1,1,n) repeats
            let mut x = 0;
            let mut shift = 0;
            let mut px = [head[0], head[1], head[2], head[3]];
            loop {
                if px[0] == 1 && px[1] == 1 && px[2] == 1 {
                    if x == 0 {
                        return Err(e("repeat at scanline start"));
                    }
                    let n = (px[3] as usize) << shift;
                    if x + n > w {
                        return Err(e("repeat overflows scanline"));
                    }
                    let prev = scan[x - 1];
                    scan[x..x + n].iter_mut().for_each(|p| *p = prev);
                    x += n;
                    shift += 8;
                } else {
                    scan[x] = px;
                    x += 1;
                    shift = 0;
                }
                if x >= w {
                    break;
                }
                let b = take(&mut pos, 4)?;
                px = [b[0], b[1], b[2], b[3]];
            }
        }
        for p in &scan {
            data.extend_from_slice(&rgbe_decode(*p));
        }
    }
    Plane::from_vec(h, w, 3, data)
}

pub fn read_hdr(path: &Path) -> Result<Plane> {
    decode_hdr(&fs::read(path)?)
}

pub fn write_hdr(img: &Plane, path: &Path) -> Result<()> {
    fs::write(path, encode_hdr(img)?)?;
    Ok(())
}

// ------------------------------------------------------- netpbm headers

/// Reads `count` whitespace-separated header tokens (with `#` comments)
/// and consumes the single whitespace byte that ends the header.
fn header_tokens<'a>(bytes: &'a [u8], count: usize, format: &'static str) -> Result<(Vec<&'a str>, usize)> {
    let mut toks = Vec::with_capacity(count);
    let mut pos = 0;
    while toks.len() < count {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(fmt_err(format, "truncated header"));
        }
        toks.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| fmt_err(format, "non-ASCII header"))?);
    }
    if pos >= bytes.len() {
        return Err(fmt_err(format, "missing pixel data"));
    }
    Ok((toks, pos + 1))
}

fn parse_dims(w: &str, h: &str, format: &'static str) -> Result<(usize, usize)> {
    let parse = |s: &str| s.parse::<usize>().map_err(|_| fmt_err(format, format!("bad dimension {s:?}")));
    let (w, h) = (parse(w)?, parse(h)?);
    if w == 0 || h == 0 || w > MAX_DIM || h > MAX_DIM {
        return Err(fmt_err(format, format!("dimension overflow {w}x{h}")));
    }
    Ok((w, h))
}

// ----------------------------------------------------------------- PFM

/// Little-endian PFM (`PF` for 3 channels, `Pf` for 1), rows bottom to top.
pub fn encode_pfm(img: &Plane) -> Result<Vec<u8>> {
    let (h, w, c) = img.dims();
    let magic = match c {
        3 => "PF",
        1 => "Pf",
        _ => return Err(fmt_err("pfm", format!("expected 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * c * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            for &v in img.pixel(y, x) {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Plane> {
    let (toks, start) = header_tokens(bytes, 4, "pfm")?;
    let c = match toks[0] {
        "PF" => 3,
        "Pf" => 1,
        m => return Err(fmt_err("pfm", format!("bad magic {m:?}"))),
    };
    let (w, h) = parse_dims(toks[1], toks[2], "pfm")?;
    let scale: f64 = toks[3].parse().map_err(|_| fmt_err("pfm", "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(fmt_err("pfm", "scale must be nonzero"));
    }
    let little = scale < 0.0;
    let n = h * w * c;
    let body = &bytes[start..];
    if body.len() < n * 4 {
        return Err(fmt_err("pfm", "truncated pixel data"));
    }
    let mut img = Plane::zeros(h, w, c);
    for (i, chunk) in body[..n * 4].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, rest) = (i / (w * c), i % (w * c));
        let dst = img.index(h - 1 - row, rest / c, rest % c);
        img.data_mut()[dst] = v as f64;
    }
    Ok(img)
}

pub fn read_pfm(path: &Path) -> Result<Plane> {
    decode_pfm(&fs::read(path)?)
}

pub fn write_pfm(img: &Plane, path: &Path) -> Result<()> {
    fs::write(path, encode_pfm(img)?)?;
    Ok(())
}

// ----------------------------------------------------------------- PPM

pub const PREVIEW_GAMMA: f64 = 2.2;

/// 8-bit gamma-encoded preview: `round(255 · clip(v)^(1/2.2))`.
pub fn encode_ppm(img: &Plane) -> Result<Vec<u8>> {
    let (h, w, c) = img.dims();
    if c != 3 {
        return Err(fmt_err("ppm", format!("expected 3 channels, got {c}")));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(
        img.data()
            .iter()
            .map(|&v| (255.0 * v.clamp(0.0, 1.0).powf(1.0 / PREVIEW_GAMMA)).round() as u8),
    );
    Ok(out)
}

/// Reads a binary PPM and undoes the preview gamma.
pub fn decode_ppm(bytes: &[u8]) -> Result<Plane> {
    let (toks, start) = header_tokens(bytes, 4, "ppm")?;
    if toks[0] != "P6" {
        return Err(fmt_err("ppm", format!("bad magic {:?}", toks[0])));
    }
    let (w, h) = parse_dims(toks[1], toks[2], "ppm")?;
    let maxval: usize = toks[3].parse().map_err(|_| fmt_err("ppm", "bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(fmt_err("ppm", format!("unsupported maxval {maxval}")));
    }
    let n = h * w * 3;
    let body = &bytes[start..];
    if body.len() < n {
        return Err(fmt_err("ppm", "truncated pixel data"));
    }
    let data = body[..n]
        .iter()
        .map(|&b| (b as f64 / maxval as f64).powf(PREVIEW_GAMMA))
        .collect();
    Plane::from_vec(h, w, 3, data)
}

pub fn read_ppm(path: &Path) -> Result<Plane> {
    decode_ppm(&fs::read(path)?)
}

pub fn write_ppm(img: &Plane, path: &Path) -> Result<()> {
    fs::write(path, encode_ppm(img)?)?;
    Ok(())
}

// ----------------------------------------------------------------- PGM

/// Single-channel 16-bit PGM with `code = round(v · 65535)`, big-endian.
pub fn encode_pgm16(img: &Plane) -> Result<Vec<u8>> {
    let (h, w, c) = img.dims();
    if c != 1 {
        return Err(fmt_err("pgm", format!("expected 1 channel, got {c}")));
    }
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &v in img.data() {
        let code = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&code.to_be_bytes());
    }
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Plane> {
    let (toks, start) = header_tokens(bytes, 4, "pgm")?;
    if toks[0] != "P5" {
        return Err(fmt_err("pgm", format!("bad magic {:?}", toks[0])));
    }
    let (w, h) = parse_dims(toks[1], toks[2], "pgm")?;
    let maxval: usize = toks[3].parse().map_err(|_| fmt_err("pgm", "bad maxval"))?;
    if maxval == 0 || maxval > 65535 {
        return Err(fmt_err("pgm", format!("unsupported maxval {maxval}")));
    }
    let wide = maxval > 255;
    let n = h * w;
    let body = &bytes[start..];
    if body.len() < n * if wide { 2 } else { 1 } {
        return Err(fmt_err("pgm", "truncated pixel data"));
    }
    let m = maxval as f64;
    let data = if wide {
        body[..2 * n]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / m)
            .collect()
    } else {
        body[..n].iter().map(|&b| b as f64 / m).collect()
    };
    Plane::from_vec(h, w, 1, data)
}

pub fn read_pgm(path: &Path) -> Result<Plane> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm16(img: &Plane, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm16(img)?)?;
    Ok(())
}

/// Reads `.hdr`, `.pfm`, `.ppm` or `.pgm` by extension.
pub fn read_image(path: &Path) -> Result<Plane> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "hdr" | "pic" | "rgbe" => read_hdr(path),
        "pfm" => read_pfm(path),
        "ppm" => read_ppm(path),
        "pgm" => read_pgm(path),
        _ => Err(fmt_err("image", format!("unknown extension {ext:?}"))),
    }
}

/// Writes `.hdr` or `.pfm` by extension.
pub fn write_image(img: &Plane, path: &Path) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "hdr" => write_hdr(img, path),
        "pfm" => write_pfm(img, path),
        "ppm" => write_ppm(img, path),
        "pgm" => write_pgm16(img, path),
        _ => Err(fmt_err("image", format!("unknown extension {ext:?}"))),
    }
}
