//! Encode a point, walk its prefixes and cover a bounding box.
//!
//! cargo run --example geohash_cells -- 47.6062 -122.3321

use hyperlocal::geohash::{cover, decode_bbox, encode, equatorial_cell_km, BoundingBox, LatLon};

fn main() -> hyperlocal::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (lat, lon) = match args[..] {
        [lat, lon] => (lat, lon),
        _ => (47.6062, -122.3321),
    };
    let p = LatLon::new(lat, lon)?;
    println!("point {p}");
    for len in 1..=7 {
        let g = encode(p, len)?;
        let b = decode_bbox(&g);
        let (w, h) = equatorial_cell_km(len);
        println!(
            "len {len}: {g:<8} lat [{:.4}, {:.4}] lon [{:.4}, {:.4}]  equatorial cell {w:.2} x {h:.2} km",
            b.south(),
            b.north(),
            b.west(),
            b.east()
        );
    }

    // a box roughly the size of a small city
    let b = BoundingBox::new(lat - 0.1, lon - 0.15, lat + 0.1, lon + 0.15)?;
    let cells = cover(&b, 4)?;
    let list: Vec<&str> = cells.iter().map(|g| g.as_str()).collect();
    println!("cover at length 4: {} cells {list:?}", cells.len());
    Ok(())
}
