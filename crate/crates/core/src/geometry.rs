//! Planar polygon kernel.
//!
//! Boolean union and offsetting are delegated to `geo` (backed by
//! `i_overlay`); everything here normalizes the results so callers can rely
//! on counter-clockwise exteriors, clockwise holes and no sliver rings.

use geo::algorithm::buffer::{BufferStyle, LineCap, LineJoin};
use geo::orient::Direction;
use geo::{
    Area, BooleanOps, Buffer, Contains, Coord, Covers, Distance, Euclidean, LineString,
    MultiPolygon, Orient, Point, Polygon, Validation,
};
use num_traits::Float;
use thiserror::Error;

use crate::scalar::Real;

/// Rings with less area than this (m²) are treated as numerical debris.
pub const SLIVER_AREA: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid polygon: {0}")]
    Invalid(String),
    #[error("ring orientation is wrong")]
    Orientation,
    #[error("polygon area below sliver threshold")]
    Degenerate,
}

/// Filled circle sector with its apex at `apex`.
///
/// The arc spans `direction ± angle/2` with `arc_segments` chords whose
/// endpoints lie exactly on the circle, so the polygon is inscribed in the
/// true sector.
pub fn make_sector<T: Real>(
    apex: Coord<T>,
    direction: T,
    radius: T,
    angle: T,
    arc_segments: usize,
) -> Polygon<T> {
    let n = arc_segments.max(2);
    let start = direction - angle / T::lit(2.0);
    let step = angle / T::lit(n as f64);
    let mut ring = Vec::with_capacity(n + 3);
    ring.push(apex);
    for i in 0..=n {
        let a = start + step * T::lit(i as f64);
        ring.push(Coord {
            x: apex.x + radius * Float::cos(a),
            y: apex.y + radius * Float::sin(a),
        });
    }
    ring.push(apex);
    Polygon::new(LineString::new(ring), vec![]).orient(Direction::Default)
}

fn sliver<T: Real>() -> T {
    T::lit(SLIVER_AREA)
}

/// Orients rings and drops sliver polygons and holes.
pub fn clean<T: Real>(region: MultiPolygon<T>) -> MultiPolygon<T> {
    let min = sliver::<T>();
    let polys = region
        .0
        .into_iter()
        .filter(|p| Float::abs(ring_signed_area(p.exterior())) >= min)
        .map(|p| {
            let (exterior, holes) = p.into_inner();
            let holes = holes
                .into_iter()
                .filter(|h| Float::abs(ring_signed_area(h)) >= min)
                .collect();
            Polygon::new(exterior, holes).orient(Direction::Default)
        })
        .filter(|p| p.unsigned_area() >= min)
        .collect();
    MultiPolygon::new(polys)
}

/// Boolean union of any number of polygons.
///
/// Zero-area inputs are ignored. Overlapping inputs merge; disjoint ones stay
/// separate components.
pub fn union<T: Real>(polygons: &[Polygon<T>]) -> MultiPolygon<T> {
    let min = sliver::<T>();
    let valid: Vec<&Polygon<T>> = polygons
        .iter()
        .filter(|p| p.unsigned_area() >= min)
        .collect();
    if valid.is_empty() {
        return MultiPolygon::new(vec![]);
    }
    clean(geo::unary_union(valid))
}

/// Union of two regions.
pub fn union_regions<T: Real>(a: &MultiPolygon<T>, b: &MultiPolygon<T>) -> MultiPolygon<T> {
    if b.0.is_empty() {
        return a.clone();
    }
    if a.0.is_empty() {
        return b.clone();
    }
    clean(a.union(b))
}

fn style<T: Real>(distance: T, arc_segments: usize) -> BufferStyle<T> {
    // chord angle for `arc_segments` per quarter turn
    let step = T::FRAC_PI_2() / T::lit(arc_segments.max(1) as f64);
    BufferStyle::new(distance)
        .line_join(LineJoin::Round(step))
        .line_cap(LineCap::Round(step))
}

/// Offsets a region by a signed distance (dilation when positive, erosion
/// when negative). Erosion may split or annihilate components.
pub fn buffer<T: Real>(region: &MultiPolygon<T>, distance: T, arc_segments: usize) -> MultiPolygon<T> {
    if region.0.is_empty() {
        return MultiPolygon::new(vec![]);
    }
    if distance == T::zero() {
        return clean(region.clone());
    }
    clean(region.buffer_with_style(style(distance, arc_segments)))
}

/// Corridor of half-width `distance` around a polyline, with round caps and
/// joins.
pub fn buffer_polyline<T: Real>(
    line: &LineString<T>,
    distance: T,
    arc_segments: usize,
) -> Polygon<T> {
    let mut parts = buffer_lines(std::slice::from_ref(line), distance, arc_segments).0;
    // a connected line always buffers to a single component
    parts.sort_by(|a, b| b.unsigned_area().total_cmp(&a.unsigned_area()));
    parts
        .into_iter()
        .next()
        .unwrap_or_else(|| Polygon::new(LineString::new(vec![]), vec![]))
}

/// Corridors around several polylines, unioned.
pub fn buffer_lines<T: Real>(
    lines: &[LineString<T>],
    distance: T,
    arc_segments: usize,
) -> MultiPolygon<T> {
    let lines: Vec<LineString<T>> = lines.iter().filter(|l| l.0.len() >= 2).cloned().collect();
    if lines.is_empty() || !(distance > T::zero()) {
        return MultiPolygon::new(vec![]);
    }
    clean(geo::MultiLineString::new(lines).buffer_with_style(style(distance, arc_segments)))
}

/// Drops all holes, keeping the exterior ring.
pub fn fill_holes<T: Real>(poly: &Polygon<T>) -> Polygon<T> {
    Polygon::new(poly.exterior().clone(), vec![])
}

/// True if the point lies in the closed polygon.
pub fn covers_point<T: Real>(poly: &Polygon<T>, point: Coord<T>) -> bool {
    poly.covers(&Point::from(point))
}

/// True if the point lies strictly inside the polygon (not on its boundary).
pub fn is_interior<T: Real>(poly: &Polygon<T>, point: Coord<T>) -> bool {
    poly.contains(&Point::from(point))
}

/// True if every point of the polyline lies in the closed polygon.
pub fn covers_line<T: Real>(poly: &Polygon<T>, line: &LineString<T>) -> bool {
    use geo::BoundingRect;
    let (Some(pb), Some(lb)) = (poly.bounding_rect(), line.bounding_rect()) else {
        return false;
    };
    if lb.min().x < pb.min().x
        || lb.min().y < pb.min().y
        || lb.max().x > pb.max().x
        || lb.max().y > pb.max().y
    {
        return false;
    }
    poly.covers(line)
}

/// Minimum distance between two polygons; zero when they intersect.
pub fn distance<T: Real>(a: &Polygon<T>, b: &Polygon<T>) -> T {
    Euclidean.distance(a, b)
}

pub fn area<T: Real>(region: &MultiPolygon<T>) -> T {
    region.unsigned_area()
}

/// Structural validity of a single polygon.
pub fn validate_polygon<T: Real>(poly: &Polygon<T>) -> Result<(), GeometryError> {
    if let Err(e) = poly.check_validation() {
        return Err(GeometryError::Invalid(e.to_string()));
    }
    if ring_signed_area(poly.exterior()) <= T::zero() {
        return Err(GeometryError::Orientation);
    }
    if poly.interiors().iter().any(|h| ring_signed_area(h) >= T::zero()) {
        return Err(GeometryError::Orientation);
    }
    if poly.unsigned_area() < sliver::<T>() {
        return Err(GeometryError::Degenerate);
    }
    Ok(())
}

/// Validates every component and their pairwise interior-disjointness.
pub fn validate_region<T: Real>(region: &MultiPolygon<T>) -> Result<(), GeometryError> {
    for p in &region.0 {
        validate_polygon(p)?;
    }
    if let Err(e) = region.check_validation() {
        return Err(GeometryError::Invalid(e.to_string()));
    }
    Ok(())
}

/// Shoelace area of a closed ring; positive when counter-clockwise.
pub fn ring_signed_area<T: Real>(ring: &LineString<T>) -> T {
    let mut twice = T::zero();
    for w in ring.0.windows(2) {
        twice = twice + (w[0].x * w[1].y - w[1].x * w[0].y);
    }
    twice / T::lit(2.0)
}
