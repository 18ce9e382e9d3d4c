//! Reading points and networks from CSV or GeoJSON, and writing patterns.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{LinearNetwork, NetLocation, Point, RectDomain};
use crate::pointprocess::{NetworkPattern, PlanarPattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    GeoJson,
}

impl Format {
    /// `.geojson` and `.json` are GeoJSON, everything else CSV.
    pub fn from_path(path: &Path) -> Format {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
        {
            Some(e) if e == "geojson" || e == "json" => Format::GeoJson,
            _ => Format::Csv,
        }
    }
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

fn parse_f64(s: &str, row: usize, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}: {what} {s:?} is not a number")))
}

/// Points from CSV with columns `x,y` (or `lon,lat` / `longitude,latitude`).
/// Rows with an empty coordinate are skipped.
pub fn read_points_csv<R: Read>(input: R) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let xi = column(&headers, &["x", "lon", "longitude"])
        .ok_or_else(|| Error::Parse("no x/lon column".into()))?;
    let yi = column(&headers, &["y", "lat", "latitude"])
        .ok_or_else(|| Error::Parse("no y/lat column".into()))?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (Some(x), Some(y)) = (rec.get(xi), rec.get(yi)) else {
            continue;
        };
        if x.trim().is_empty() || y.trim().is_empty() {
            continue;
        }
        out.push(Point::new(
            parse_f64(x, row + 1, "x")?,
            parse_f64(y, row + 1, "y")?,
        ));
    }
    Ok(out)
}

fn coord(v: &Value) -> Result<Point> {
    match v.as_array().map(|a| a.as_slice()) {
        Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => Ok(Point::new(x, y)),
            _ => Err(Error::Parse(format!("bad coordinate {v}"))),
        },
        _ => Err(Error::Parse(format!("bad coordinate {v}"))),
    }
}

fn coords(v: &Value) -> Result<Vec<Point>> {
    v.as_array()
        .ok_or_else(|| Error::Parse(format!("expected a coordinate list, got {v}")))?
        .iter()
        .map(coord)
        .collect()
}

/// Every geometry in a GeoJSON document: a FeatureCollection, a Feature or
/// a bare geometry.
fn geometries(doc: &Value) -> Vec<&Value> {
    match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .map(|fs| fs.iter().filter_map(|f| f.get("geometry")).collect())
            .unwrap_or_default(),
        Some("Feature") => doc.get("geometry").into_iter().collect(),
        Some("GeometryCollection") => doc
            .get("geometries")
            .and_then(Value::as_array)
            .map(|g| g.iter().collect())
            .unwrap_or_default(),
        Some(_) => vec![doc],
        None => Vec::new(),
    }
}

pub fn read_points_geojson<R: Read>(input: R) -> Result<Vec<Point>> {
    let doc: Value = serde_json::from_reader(input)?;
    let mut out = Vec::new();
    for g in geometries(&doc) {
        let c = g.get("coordinates");
        match (g.get("type").and_then(Value::as_str), c) {
            (Some("Point"), Some(c)) => out.push(coord(c)?),
            (Some("MultiPoint"), Some(c)) => out.extend(coords(c)?),
            _ => {}
        }
    }
    Ok(out)
}

/// Polylines from GeoJSON LineString / MultiLineString geometries.
pub fn read_lines_geojson<R: Read>(input: R) -> Result<Vec<Vec<Point>>> {
    let doc: Value = serde_json::from_reader(input)?;
    let mut out = Vec::new();
    for g in geometries(&doc) {
        let c = g.get("coordinates");
        match (g.get("type").and_then(Value::as_str), c) {
            (Some("LineString"), Some(c)) => out.push(coords(c)?),
            (Some("MultiLineString"), Some(Value::Array(parts))) => {
                for p in parts {
                    out.push(coords(p)?);
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Edge list with columns `x1,y1,x2,y2`, one segment per row.
pub fn read_lines_csv<R: Read>(input: R) -> Result<Vec<Vec<Point>>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = ["x1", "y1", "x2", "y2"]
        .iter()
        .map(|n| column(&headers, &[n]).ok_or_else(|| Error::Parse(format!("no {n} column"))))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v: Vec<f64> = idx
            .iter()
            .map(|&i| parse_f64(rec.get(i).unwrap_or(""), row + 1, "coordinate"))
            .collect::<Result<_>>()?;
        out.push(vec![Point::new(v[0], v[1]), Point::new(v[2], v[3])]);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn read_points(path: &Path, format: Format) -> Result<Vec<Point>> {
    match format {
        Format::Csv => read_points_csv(open(path)?),
        Format::GeoJson => read_points_geojson(open(path)?),
    }
}

pub fn read_lines(path: &Path, format: Format) -> Result<Vec<Vec<Point>>> {
    match format {
        Format::Csv => read_lines_csv(open(path)?),
        Format::GeoJson => read_lines_geojson(open(path)?),
    }
}

/// Removes exact duplicates, keeping first occurrences in order.
pub fn dedup_points(points: &[Point]) -> (Vec<Point>, usize) {
    let mut seen = HashSet::new();
    let out: Vec<Point> = points
        .iter()
        .filter(|p| seen.insert((p.x.to_bits(), p.y.to_bits())))
        .copied()
        .collect();
    let removed = points.len() - out.len();
    (out, removed)
}

/// Local equirectangular projection from degrees to meters about a
/// reference longitude/latitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lon0: f64,
    pub lat0: f64,
}

/// Mean Earth radius in meters.
const EARTH_RADIUS: f64 = 6_371_008.8;

impl Projection {
    /// Centered on the bounding box of `points` (given as lon/lat).
    pub fn about_bbox(points: &[Point]) -> Option<Projection> {
        let first = points.first()?;
        let (mut lo, mut hi) = (*first, *first);
        for p in points {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        Some(Projection {
            lon0: 0.5 * (lo.x + hi.x),
            lat0: 0.5 * (lo.y + hi.y),
        })
    }

    pub fn forward(&self, p: &Point) -> Point {
        let k = EARTH_RADIUS * std::f64::consts::PI / 180.0;
        Point::new(
            k * (p.x - self.lon0) * self.lat0.to_radians().cos(),
            k * (p.y - self.lat0),
        )
    }
}

/// Outcome of reading a point file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub read: usize,
    pub duplicates: usize,
    /// Points outside the domain, or farther than the tolerance from the
    /// network.
    pub rejected: usize,
    pub warnings: Vec<String>,
}

/// Reads, deduplicates and keeps the points inside `domain`.
pub fn ingest_planar(
    path: &Path,
    format: Format,
    domain: &RectDomain,
) -> Result<(PlanarPattern, IngestReport)> {
    let raw = read_points(path, format)?;
    let mut report = IngestReport {
        read: raw.len(),
        ..IngestReport::default()
    };
    if raw.is_empty() {
        report
            .warnings
            .push(format!("{} holds no points", path.display()));
    }
    let (pts, dup) = dedup_points(&raw);
    report.duplicates = dup;
    let inside: Vec<Point> = pts.iter().filter(|p| domain.contains(p)).copied().collect();
    report.rejected = pts.len() - inside.len();
    Ok((PlanarPattern::new(*domain, inside)?, report))
}

/// Snaps each point to its nearest network location; points farther than
/// `tol` are rejected and listed by input index with their distance.
pub fn snap_to_network(
    net: &LinearNetwork,
    points: &[Point],
    tol: f64,
) -> (Vec<NetLocation>, Vec<(usize, f64)>) {
    let mut locs = Vec::new();
    let mut rejects = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let (loc, d) = net.project(p);
        if d <= tol {
            locs.push(loc);
        } else {
            rejects.push((i, d));
        }
    }
    (locs, rejects)
}

pub fn write_planar_csv<W: Write>(pattern: &PlanarPattern, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y"])?;
    for p in pattern.points() {
        w.write_record([p.x.to_string(), p.y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Edge list in the layout [`read_lines_csv`] reads.
pub fn write_lines_csv<W: Write>(net: &LinearNetwork, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "y1", "x2", "y2"])?;
    for s in net.segments() {
        let (a, b) = (net.nodes()[s.a], net.nodes()[s.b]);
        w.write_record([a.x, a.y, b.x, b.y].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_network_csv<W: Write>(pattern: &NetworkPattern, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seg", "offset", "x", "y"])?;
    for l in pattern.locations() {
        let p = pattern.network().location_point(l);
        w.write_record([
            l.seg.to_string(),
            l.offset.to_string(),
            p.x.to_string(),
            p.y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `seg,offset` CSV back into locations on `net`.
pub fn read_network_csv<R: Read>(
    net: &std::sync::Arc<LinearNetwork>,
    input: R,
) -> Result<NetworkPattern> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let si = column(&headers, &["seg"]).ok_or_else(|| Error::Parse("no seg column".into()))?;
    let oi =
        column(&headers, &["offset"]).ok_or_else(|| Error::Parse("no offset column".into()))?;
    let mut locs = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let seg: usize = rec
            .get(si)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad segment index", row + 1)))?;
        let offset = parse_f64(rec.get(oi).unwrap_or(""), row + 1, "offset")?;
        locs.push(NetLocation::new(seg, offset));
    }
    NetworkPattern::new(net.clone(), locs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn csv_with_duplicates() {
        let mut text = String::from("x,y\n");
        for i in 0..9 {
            text.push_str(&format!("{},{}\n", i as f64 / 10.0, 0.5));
        }
        text.push_str("0.3,0.5\n");
        let pts = read_points_csv(text.as_bytes()).unwrap();
        assert_eq!(pts.len(), 10);
        let (d, removed) = dedup_points(&pts);
        assert_eq!((d.len(), removed), (9, 1));
    }

    #[test]
    fn empty_file_gives_empty_pattern_and_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        let d = RectDomain::square(0.0, 1.0).unwrap();
        let (p, rep) = ingest_planar(&path, Format::Csv, &d).unwrap();
        assert!(p.is_empty());
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn lon_lat_columns_and_projection() {
        let text = "ID,Latitude,Longitude\n1,41.8,-87.66\n2,41.805,-87.655\n3,,\n";
        let pts = read_points_csv(text.as_bytes()).unwrap();
        assert_eq!(
            pts,
            vec![Point::new(-87.66, 41.8), Point::new(-87.655, 41.805)]
        );
        let proj = Projection::about_bbox(&pts).unwrap();
        let a = proj.forward(&pts[0]);
        let b = proj.forward(&pts[1]);
        // 0.005 degrees of latitude is about 556 m
        assert!((b.y - a.y - 555.97).abs() < 0.1);
        assert!((b.x - a.x - 555.97 * 41.8025f64.to_radians().cos()).abs() < 0.1);
        assert!((a.x + b.x).abs() < 1e-9 && (a.y + b.y).abs() < 1e-9);
    }

    #[test]
    fn geojson_points_and_lines() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"Point","coordinates":[1,2]},"properties":{}},
            {"type":"Feature","geometry":{"type":"MultiPoint","coordinates":[[3,4],[5,6]]}},
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[0,0],[1,0],[1,1]]}},
            {"type":"Feature","geometry":{"type":"MultiLineString","coordinates":[[[0,0],[0,1]],[[2,2],[3,3]]]}}
        ]}"#;
        assert_eq!(read_points_geojson(doc.as_bytes()).unwrap().len(), 3);
        let lines = read_lines_geojson(doc.as_bytes()).unwrap();
        assert_eq!(
            lines.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![3, 2, 2]
        );
    }

    #[test]
    fn edge_list_and_snapping() {
        let text = "x1,y1,x2,y2\n0,0,10,0\n10,0,10,10\n";
        let lines = read_lines_csv(text.as_bytes()).unwrap();
        let net = Arc::new(LinearNetwork::from_polylines(&lines, 1e-9).unwrap());
        let (locs, rejects) = snap_to_network(
            &net,
            &[
                Point::new(3.0, 0.5),
                Point::new(9.0, 5.0),
                Point::new(3.0, 5.0),
            ],
            1.5,
        );
        assert_eq!(locs.len(), 2);
        assert_eq!(rejects.len(), 1);
        assert_eq!(rejects[0].0, 2);
        let p = net.location_point(&locs[0]);
        assert!((p.x - 3.0).abs() < 1e-12 && p.y.abs() < 1e-12);
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "x1,y1,x2,y2\n0,0,10,0\n10,0,10,10\n10,10,0,0\n";
        let net =
            LinearNetwork::from_polylines(&read_lines_csv(text.as_bytes()).unwrap(), 1e-9).unwrap();
        let mut buf = Vec::new();
        write_lines_csv(&net, &mut buf).unwrap();
        let back =
            LinearNetwork::from_polylines(&read_lines_csv(buf.as_slice()).unwrap(), 1e-9).unwrap();
        assert_eq!(back.nodes(), net.nodes());
        assert_eq!(back.segments(), net.segments());
    }

    #[test]
    fn network_csv_round_trip() {
        let net = Arc::new(
            LinearNetwork::new(vec![Point::new(0.0, 0.0), Point::new(4.0, 3.0)], &[(0, 1)])
                .unwrap(),
        );
        let pat = NetworkPattern::new(net.clone(), vec![NetLocation::new(0, 2.5)]).unwrap();
        let mut buf = Vec::new();
        write_network_csv(&pat, &mut buf).unwrap();
        let back = read_network_csv(&net, buf.as_slice()).unwrap();
        assert_eq!(back.locations(), pat.locations());
    }
}
