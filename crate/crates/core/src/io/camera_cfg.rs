//! Flat `key = value` camera files.
//!
//! ```text
//! # NYU-style camera, identity pose
//! fx = 518.8579
//! fy = 519.4696
//! cx = 325.5824
//! cy = 253.7362
//! r00 = 1
//! ...
//! r22 = 1
//! tx = 0
//! ty = 0
//! tz = 0
//! width = 640
//! height = 480
//! ```
//!
//! Every key is required exactly once. Blank lines and `#` comments are
//! ignored; unknown keys are errors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::camera::CameraModel;
use crate::error::{Error, Result};

pub const REAL_KEYS: [&str; 16] = [
    "fx", "fy", "cx", "cy", "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22", "tx", "ty", "tz",
];
pub const SIZE_KEYS: [&str; 2] = ["width", "height"];

pub fn parse(text: &str) -> Result<CameraModel> {
    let mut entries: HashMap<&str, &str> = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim();
        if !REAL_KEYS.contains(&key) && !SIZE_KEYS.contains(&key) {
            return Err(Error::Format(format!("line {}: unknown key `{key}`", lineno + 1)));
        }
        if entries.insert(key, value.trim()).is_some() {
            return Err(Error::Format(format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    let real = |key: &str| -> Result<f64> {
        let v = entries.get(key).ok_or_else(|| Error::Format(format!("missing key `{key}`")))?;
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Format(format!("`{key}`: `{v}` is not a finite number")))
    };
    let size = |key: &str| -> Result<usize> {
        let v = entries.get(key).ok_or_else(|| Error::Format(format!("missing key `{key}`")))?;
        v.parse::<usize>()
            .map_err(|_| Error::Format(format!("`{key}`: `{v}` is not a non-negative integer")))
    };
    let mut rotation = [[0.0; 3]; 3];
    for (i, row) in rotation.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = real(&format!("r{i}{j}"))?;
        }
    }
    CameraModel::pinhole(
        real("fx")?,
        real("fy")?,
        real("cx")?,
        real("cy")?,
        rotation,
        [real("tx")?, real("ty")?, real("tz")?],
        (size("width")?, size("height")?),
    )
}

/// Inverse of [`parse`] for zero-skew cameras.
pub fn format(cam: &CameraModel) -> Result<String> {
    let k = cam.intrinsics();
    if k[0][1] != 0.0 || k[1][0] != 0.0 {
        return Err(Error::InvalidCamera("camera files cannot store skewed intrinsics".into()));
    }
    let mut out = String::new();
    let mut put = |key: &str, v: f64| writeln!(out, "{key} = {v}").expect("string write");
    put("fx", k[0][0]);
    put("fy", k[1][1]);
    put("cx", k[0][2]);
    put("cy", k[1][2]);
    let r = cam.rotation();
    for (i, row) in r.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            put(&format!("r{i}{j}"), x);
        }
    }
    let t = cam.translation();
    put("tx", t[0]);
    put("ty", t[1]);
    put("tz", t[2]);
    let (w, h) = cam.image_size();
    writeln!(out, "width = {w}\nheight = {h}").expect("string write");
    Ok(out)
}

pub fn read(path: &Path) -> Result<CameraModel> {
    parse(&std::fs::read_to_string(path)?)
}

pub fn write(path: &Path, cam: &CameraModel) -> Result<()> {
    super::write_atomic(path, format(cam)?.as_bytes())
}
