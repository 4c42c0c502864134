//! Base-32 geohash codec, rectangle coverage and prefix helpers.
//!
//! Cells follow the usual interleaved-bisection layout: bit 0 splits
//! longitude, bit 1 latitude, and so on, five bits per character. A cell is
//! half-open on its west and south edges (`lo <= v < hi`) except at the
//! north pole and antimeridian where the last cell is closed, which matches
//! what bisection produces for `v >= mid`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";
pub const MAX_LEN: usize = 12;
/// Largest length accepted by [`cover`].
pub const MAX_COVER_LEN: usize = 8;
pub const DEFAULT_MAX_COVER_CELLS: usize = 4096;
/// Mean earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLatLon")]
pub struct LatLon {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawLatLon {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawLatLon> for LatLon {
    type Error = Error;

    fn try_from(raw: RawLatLon) -> Result<Self> {
        LatLon::new(raw.lat, raw.lon)
    }
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::validation(format!("latitude {lat} out of range")));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::validation(format!("longitude {lon} out of range")));
        }
        Ok(LatLon { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl fmt::Display for LatLon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// Axis-aligned lat/lon rectangle with closed edges. Boxes that wrap the
/// antimeridian are not representable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoundingBox {
    south: f64,
    west: f64,
    north: f64,
    east: f64,
}

#[derive(Deserialize)]
struct RawBox {
    south: f64,
    west: f64,
    north: f64,
    east: f64,
}

impl TryFrom<RawBox> for BoundingBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BoundingBox::new(raw.south, raw.west, raw.north, raw.east)
    }
}

impl BoundingBox {
    pub fn new(south: f64, west: f64, north: f64, east: f64) -> Result<Self> {
        // corner validation doubles as the finiteness/range check
        LatLon::new(south, west)?;
        LatLon::new(north, east)?;
        if south > north {
            return Err(Error::validation(format!(
                "bounding box south {south} above north {north}"
            )));
        }
        if west > east {
            return Err(Error::validation(format!(
                "bounding box west {west} east of east {east} (antimeridian boxes unsupported)"
            )));
        }
        Ok(BoundingBox {
            south,
            west,
            north,
            east,
        })
    }

    pub fn point(p: LatLon) -> Self {
        BoundingBox {
            south: p.lat,
            west: p.lon,
            north: p.lat,
            east: p.lon,
        }
    }

    pub fn south(&self) -> f64 {
        self.south
    }

    pub fn west(&self) -> f64 {
        self.west
    }

    pub fn north(&self) -> f64 {
        self.north
    }

    pub fn east(&self) -> f64 {
        self.east
    }

    pub fn width_deg(&self) -> f64 {
        self.east - self.west
    }

    pub fn height_deg(&self) -> f64 {
        self.north - self.south
    }

    pub fn contains(&self, p: LatLon) -> bool {
        self.south <= p.lat && p.lat <= self.north && self.west <= p.lon && p.lon <= self.east
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.south <= other.south
            && other.north <= self.north
            && self.west <= other.west
            && other.east <= self.east
    }

    pub fn center(&self) -> LatLon {
        LatLon {
            lat: (self.south + self.north) / 2.0,
            lon: (self.west + self.east) / 2.0,
        }
    }

    pub fn area_deg2(&self) -> f64 {
        self.width_deg() * self.height_deg()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Geohash(String);

impl Geohash {
    pub fn new(text: &str) -> Result<Self> {
        if text.is_empty() || text.len() > MAX_LEN {
            return Err(Error::validation(format!(
                "geohash {text:?} must have 1..={MAX_LEN} characters"
            )));
        }
        if let Some(c) = text.bytes().find(|b| char_value(*b).is_none()) {
            return Err(Error::validation(format!(
                "geohash {text:?} contains invalid character {:?}",
                c as char
            )));
        }
        Ok(Geohash(text.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn prefix(&self, n: usize) -> Result<Geohash> {
        if n == 0 || n > self.len() {
            return Err(Error::validation(format!(
                "prefix length {n} invalid for geohash {:?}",
                self.0
            )));
        }
        Ok(Geohash(self.0[..n].to_owned()))
    }

    pub fn bbox(&self) -> BoundingBox {
        decode_bbox(self)
    }

    pub fn center(&self) -> LatLon {
        self.bbox().center()
    }

    /// The 32 cells one character longer.
    pub fn children(&self) -> Result<Vec<Geohash>> {
        if self.len() == MAX_LEN {
            return Err(Error::validation("geohash already at maximum length"));
        }
        Ok(ALPHABET
            .iter()
            .map(|&c| {
                let mut s = self.0.clone();
                s.push(c as char);
                Geohash(s)
            })
            .collect())
    }
}

impl fmt::Display for Geohash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Geohash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Geohash::new(s)
    }
}

impl TryFrom<String> for Geohash {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Geohash::new(&s)
    }
}

impl From<Geohash> for String {
    fn from(g: Geohash) -> String {
        g.0
    }
}

impl AsRef<str> for Geohash {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

fn char_value(b: u8) -> Option<u64> {
    ALPHABET.iter().position(|&c| c == b).map(|i| i as u64)
}

/// Number of longitude and latitude bits in a geohash of `len` characters.
fn axis_bits(len: usize) -> (u32, u32) {
    let total = 5 * len as u32;
    (total.div_ceil(2), total / 2)
}

/// Cell width and height in degrees at the given length.
pub fn cell_size_deg(len: usize) -> (f64, f64) {
    let (lon_bits, lat_bits) = axis_bits(len);
    (
        360.0 / (1u64 << lon_bits) as f64,
        180.0 / (1u64 << lat_bits) as f64,
    )
}

/// Cell width and height in kilometres measured along the equator.
pub fn equatorial_cell_km(len: usize) -> (f64, f64) {
    let (w, h) = cell_size_deg(len);
    (
        EARTH_RADIUS_KM * w.to_radians(),
        EARTH_RADIUS_KM * h.to_radians(),
    )
}

/// Bisection index of `v` within `[lo, hi]` split `bits` times.
fn axis_index(v: f64, mut lo: f64, mut hi: f64, bits: u32) -> u64 {
    let mut idx = 0u64;
    for _ in 0..bits {
        let mid = (lo + hi) / 2.0;
        idx <<= 1;
        if v >= mid {
            idx |= 1;
            lo = mid;
        } else {
            hi = mid;
        }
    }
    idx
}

fn interleave(col: u64, row: u64, len: usize) -> Geohash {
    let (lon_bits, lat_bits) = axis_bits(len);
    let mut out = String::with_capacity(len);
    let (mut lon_left, mut lat_left) = (lon_bits, lat_bits);
    let mut value = 0usize;
    for bit in 0..5 * len {
        let b = if bit % 2 == 0 {
            lon_left -= 1;
            (col >> lon_left) & 1
        } else {
            lat_left -= 1;
            (row >> lat_left) & 1
        };
        value = (value << 1) | b as usize;
        if bit % 5 == 4 {
            out.push(ALPHABET[value] as char);
            value = 0;
        }
    }
    Geohash(out)
}

fn deinterleave(gh: &Geohash) -> (u64, u64) {
    let (mut col, mut row) = (0u64, 0u64);
    let mut bit = 0;
    for b in gh.0.bytes() {
        let v = char_value(b).expect("validated at construction");
        for shift in (0..5).rev() {
            let x = (v >> shift) & 1;
            if bit % 2 == 0 {
                col = (col << 1) | x;
            } else {
                row = (row << 1) | x;
            }
            bit += 1;
        }
    }
    (col, row)
}

fn check_len(len: usize, max: usize) -> Result<()> {
    if len == 0 || len > max {
        return Err(Error::validation(format!(
            "geohash length {len} outside 1..={max}"
        )));
    }
    Ok(())
}

pub fn encode(point: LatLon, len: usize) -> Result<Geohash> {
    check_len(len, MAX_LEN)?;
    let (lon_bits, lat_bits) = axis_bits(len);
    let col = axis_index(point.lon, -180.0, 180.0, lon_bits);
    let row = axis_index(point.lat, -90.0, 90.0, lat_bits);
    Ok(interleave(col, row, len))
}

pub fn decode_bbox(gh: &Geohash) -> BoundingBox {
    let (w, h) = cell_size_deg(gh.len());
    let (col, row) = deinterleave(gh);
    BoundingBox {
        south: -90.0 + row as f64 * h,
        west: -180.0 + col as f64 * w,
        north: -90.0 + (row + 1) as f64 * h,
        east: -180.0 + (col + 1) as f64 * w,
    }
}

/// Inclusive range of cell indices along one axis touched by `[lo, hi]`.
///
/// A non-degenerate interval takes the cells it overlaps with positive
/// length; a degenerate one takes the single cell `encode` would pick.
fn axis_span(lo: f64, hi: f64, min: f64, max: f64, bits: u32) -> (u64, u64) {
    let first = axis_index(lo, min, max, bits);
    if lo == hi {
        return (first, first);
    }
    let size = (max - min) / (1u64 << bits) as f64;
    let mut last = axis_index(hi, min, max, bits);
    if last > first && min + last as f64 * size >= hi {
        last -= 1;
    }
    (first, last)
}

/// All geohashes of `len` characters whose cells overlap `bbox`, with the
/// default cap of [`DEFAULT_MAX_COVER_CELLS`].
pub fn cover(bbox: &BoundingBox, len: usize) -> Result<BTreeSet<Geohash>> {
    cover_capped(bbox, len, DEFAULT_MAX_COVER_CELLS)
}

pub fn cover_capped(bbox: &BoundingBox, len: usize, max_cells: usize) -> Result<BTreeSet<Geohash>> {
    check_len(len, MAX_COVER_LEN)?;
    let (lon_bits, lat_bits) = axis_bits(len);
    let (c0, c1) = axis_span(bbox.west, bbox.east, -180.0, 180.0, lon_bits);
    let (r0, r1) = axis_span(bbox.south, bbox.north, -90.0, 90.0, lat_bits);
    let count = ((c1 - c0 + 1) * (r1 - r0 + 1)) as usize;
    if count > max_cells {
        return Err(Error::CoverageTooLarge {
            count,
            cap: max_cells,
        });
    }
    let mut out = BTreeSet::new();
    for col in c0..=c1 {
        for row in r0..=r1 {
            out.insert(interleave(col, row, len));
        }
    }
    Ok(out)
}

pub fn shares_prefix(a: &Geohash, b: &Geohash, n: usize) -> Result<bool> {
    if n > a.len() || n > b.len() {
        return Err(Error::validation(format!(
            "prefix length {n} longer than {a} or {b}"
        )));
    }
    Ok(a.0.as_bytes()[..n] == b.0.as_bytes()[..n])
}
