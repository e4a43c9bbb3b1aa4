//! Planar polygons and the doubling construction.
//!
//! A compact polygon (optionally with polygonal holes) is doubled across its
//! boundary into a closed flat surface. Every boundary vertex of interior
//! angle `alpha` becomes a cone point of cone angle `2*alpha`, recorded by its
//! radius `rho = alpha / pi`; away from those points the doubled metric is
//! smooth and Euclidean. The double is kept abstract (base polygon plus the
//! mirror involution), never embedded in 3-space.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use crate::{Error, Result};

/// A point in the plane.
#[derive(Clone, Copy, PartialEq, Debug, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product, positive for a left turn.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A validated planar polygon: counterclockwise outer ring, clockwise holes.
#[derive(Clone, Debug)]
pub struct PolygonSpec {
    pub name: String,
    pub outer: Vec<Point2>,
    pub holes: Vec<Vec<Point2>>,
}

/// A boundary vertex of the base polygon, seen as a cone point of the double.
///
/// `rho` is always computed as `alpha / pi` from the same `alpha` stored here,
/// so the two fields agree bit-for-bit with that expression.
#[derive(Clone, Copy, Debug)]
pub struct ConePoint {
    pub location: Point2,
    /// Interior angle of the polygon at this vertex, in (0, 2*pi).
    pub alpha: f64,
    /// Cone radius of the double; the cone angle there is `2 * alpha`.
    pub rho: f64,
}

impl ConePoint {
    fn from_angle(location: Point2, alpha: f64) -> Self {
        ConePoint {
            location,
            alpha,
            rho: alpha / PI,
        }
    }
}

/// The doubled surface: base polygon, its cone points, and the total area.
#[derive(Clone, Debug)]
pub struct SurfaceSpec {
    pub base: PolygonSpec,
    pub cone_points: Vec<ConePoint>,
    /// Twice the base polygon area.
    pub total_area: f64,
}

impl SurfaceSpec {
    /// Euler characteristic of the double: doubling a planar domain with `h`
    /// holes yields a closed orientable surface of genus `h`.
    pub fn euler_characteristic(&self) -> i64 {
        2 - 2 * self.base.holes.len() as i64
    }

    /// Residual of the discrete Gauss-Bonnet identity
    /// `sum_j (2*pi - 2*alpha_j) = 2*pi*chi(X)`; zero up to rounding for any
    /// valid input.
    pub fn gauss_bonnet_defect(&self) -> f64 {
        let total: f64 = self
            .cone_points
            .iter()
            .map(|c| 2.0 * PI - 2.0 * c.alpha)
            .sum();
        total - 2.0 * PI * self.euler_characteristic() as f64
    }
}

/// Double a polygon across its boundary.
///
/// Every vertex of the base (outer ring and holes) contributes one cone point
/// with `rho = alpha/pi`; the flat metric extends smoothly across the open
/// boundary edges.
pub fn double(poly: PolygonSpec) -> SurfaceSpec {
    let cone_points = poly
        .rings()
        .flat_map(|ring| {
            interior_angles(ring)
                .into_iter()
                .zip(ring.iter())
                .map(|(alpha, &v)| ConePoint::from_angle(v, alpha))
                .collect::<Vec<_>>()
        })
        .collect();
    let total_area = 2.0 * poly.area();
    SurfaceSpec {
        base: poly,
        cone_points,
        total_area,
    }
}

impl PolygonSpec {
    /// Build and validate a polygon; see [`PolygonSpec::validate`].
    pub fn new(name: impl Into<String>, outer: Vec<Point2>, holes: Vec<Vec<Point2>>) -> Result<Self> {
        let poly = PolygonSpec {
            name: name.into(),
            outer,
            holes,
        };
        poly.validate()?;
        Ok(poly)
    }

    /// All boundary rings: the outer ring first, then each hole.
    pub fn rings(&self) -> impl Iterator<Item = &[Point2]> {
        std::iter::once(self.outer.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    /// Area enclosed by the outer ring minus the holes.
    pub fn area(&self) -> f64 {
        // Holes are clockwise, so their signed areas subtract.
        self.rings().map(signed_area).sum()
    }

    /// Diagonal of the bounding box; the length scale used for tolerances.
    pub fn diameter(&self) -> f64 {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.rings().flatten() {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (hi - lo).norm()
    }

    /// Interior angle at each vertex, ring by ring, in ring vertex order.
    pub fn interior_angles(&self) -> Vec<Vec<f64>> {
        self.rings().map(interior_angles).collect()
    }

    /// Strict interior test (boundary points are not inside).
    pub fn contains(&self, p: Point2) -> bool {
        if !point_in_ring(p, &self.outer) {
            return false;
        }
        !self.holes.iter().any(|h| point_in_ring(p, h))
    }

    /// Distance from `p` to the nearest boundary segment.
    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        let mut best = f64::INFINITY;
        for ring in self.rings() {
            for (a, b) in ring_edges(ring) {
                best = best.min(point_segment_distance(p, a, b));
            }
        }
        best
    }

    pub fn validate(&self) -> Result<()> {
        let scale = self.diameter();
        if !scale.is_finite() || scale == 0.0 {
            return Err(Error::InvalidPolygon {
                name: self.name.clone(),
                detail: "degenerate extent".into(),
            });
        }
        let eps = 1e-12 * scale;

        for (ring_idx, ring) in self.rings().enumerate() {
            if ring.len() < 3 {
                return Err(self.ring_error(ring_idx, 0, "fewer than 3 vertices"));
            }
            for (i, (a, b)) in ring_edges(ring).enumerate() {
                if a.dist(b) <= eps {
                    return Err(self.ring_error(ring_idx, i, "consecutive vertices coincide"));
                }
            }
            // Orientation: outer counterclockwise, holes clockwise.
            let sa = signed_area(ring);
            if ring_idx == 0 && sa <= 0.0 {
                return Err(self.ring_error(ring_idx, 0, "outer ring must be counterclockwise"));
            }
            if ring_idx > 0 && sa >= 0.0 {
                return Err(self.ring_error(ring_idx, 0, "hole ring must be clockwise"));
            }
            if let Some((i, j)) = first_self_intersection(ring) {
                return Err(self.ring_error(
                    ring_idx,
                    i,
                    &format!("self-intersection between edges {i} and {j}"),
                ));
            }
            for (i, &alpha) in interior_angles(ring).iter().enumerate() {
                if !(1e-9..=2.0 * PI - 1e-9).contains(&alpha) {
                    return Err(self.ring_error(
                        ring_idx,
                        i,
                        &format!("degenerate interior angle {alpha:.3e}"),
                    ));
                }
            }
        }

        // Holes strictly inside the outer ring and pairwise disjoint.
        for (h_idx, hole) in self.holes.iter().enumerate() {
            for (i, &v) in hole.iter().enumerate() {
                if !point_in_ring(v, &self.outer) {
                    return Err(self.ring_error(h_idx + 1, i, "hole vertex outside outer ring"));
                }
            }
            if rings_intersect(hole, &self.outer) {
                return Err(self.ring_error(h_idx + 1, 0, "hole touches outer boundary"));
            }
        }
        for i in 0..self.holes.len() {
            for j in i + 1..self.holes.len() {
                if rings_intersect(&self.holes[i], &self.holes[j])
                    || point_in_ring(self.holes[j][0], &self.holes[i])
                    || point_in_ring(self.holes[i][0], &self.holes[j])
                {
                    return Err(self.ring_error(j + 1, 0, &format!("holes {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    fn ring_error(&self, ring: usize, vertex: usize, detail: &str) -> Error {
        Error::InvalidPolygon {
            name: self.name.clone(),
            detail: if ring == 0 {
                format!("outer ring, vertex {vertex}: {detail}")
            } else {
                format!("hole {}, vertex {vertex}: {detail}", ring - 1)
            },
        }
    }

    /// Parse the line-oriented polygon format.
    ///
    /// ```text
    /// # comment
    /// name <label>
    /// outer <n>
    /// x y            (n lines)
    /// hole <m>       (zero or more blocks)
    /// x y            (m lines)
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let mut cursor = 0usize;

        let parse_err = |line: usize, detail: &str| Error::PolygonParse {
            line,
            detail: detail.to_string(),
        };

        let (line, head) = *lines
            .first()
            .ok_or_else(|| parse_err(0, "empty polygon file"))?;
        cursor += 1;
        let name = head
            .strip_prefix("name")
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| parse_err(line, "expected `name <label>`"))?
            .to_string();

        fn read_ring(
            lines: &[(usize, &str)],
            cursor: &mut usize,
            kind: &str,
            count_line: usize,
            count_str: &str,
        ) -> Result<Vec<Point2>> {
            let parse_err = |line: usize, detail: String| Error::PolygonParse { line, detail };
            let n: usize = count_str
                .parse()
                .map_err(|_| parse_err(count_line, format!("bad vertex count for `{kind}`")))?;
            let mut ring = Vec::with_capacity(n);
            for _ in 0..n {
                let &(vline, vtext) = lines.get(*cursor).ok_or_else(|| {
                    parse_err(count_line, "unexpected end of file inside ring".into())
                })?;
                *cursor += 1;
                let mut it = vtext.split_whitespace();
                let x = it.next().and_then(|t| t.parse::<f64>().ok());
                let y = it.next().and_then(|t| t.parse::<f64>().ok());
                match (x, y, it.next()) {
                    (Some(x), Some(y), None) => ring.push(Point2::new(x, y)),
                    _ => return Err(parse_err(vline, "expected `x y`".into())),
                }
            }
            Ok(ring)
        }

        let &(oline, otext) = lines
            .get(cursor)
            .ok_or_else(|| parse_err(line, "missing `outer <n>` block"))?;
        cursor += 1;
        let ocount = otext
            .strip_prefix("outer")
            .map(str::trim)
            .ok_or_else(|| parse_err(oline, "expected `outer <n>`"))?;
        let outer = read_ring(&lines, &mut cursor, "outer", oline, ocount)?;

        let mut holes = Vec::new();
        while let Some(&(hline, htext)) = lines.get(cursor) {
            cursor += 1;
            let hcount = htext
                .strip_prefix("hole")
                .map(str::trim)
                .ok_or_else(|| parse_err(hline, "expected `hole <m>`"))?;
            holes.push(read_ring(&lines, &mut cursor, "hole", hline, hcount)?);
        }

        Self::new(name, outer, holes)
    }
}

/// Signed area of a ring (positive when counterclockwise).
pub fn signed_area(ring: &[Point2]) -> f64 {
    0.5 * ring_edges(ring).map(|(a, b)| a.cross(b)).sum::<f64>()
}

fn ring_edges(ring: &[Point2]) -> impl Iterator<Item = (Point2, Point2)> + '_ {
    (0..ring.len()).map(|i| (ring[i], ring[(i + 1) % ring.len()]))
}

/// Interior angles along a ring whose domain side is on the left.
///
/// The angle at each vertex is accumulated from the turn of the edge
/// directions: `alpha = pi - atan2(cross, dot)`, which lands in (0, 2*pi) and
/// is robust for re-entrant vertices.
pub fn interior_angles(ring: &[Point2]) -> Vec<f64> {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let prev = ring[(i + n - 1) % n];
            let next = ring[(i + 1) % n];
            let u = ring[i] - prev;
            let w = next - ring[i];
            PI - u.cross(w).atan2(u.dot(w))
        })
        .collect()
}

/// Even-odd ray casting; points on the boundary are classified arbitrarily.
fn point_in_ring(p: Point2, ring: &[Point2]) -> bool {
    let mut inside = false;
    for (a, b) in ring_edges(ring) {
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Proper crossing test between open segments, plus endpoint-interior touches.
fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Point2, a: Point2, b: Point2, d: f64| {
        d == 0.0
            && p.x >= a.x.min(b.x)
            && p.x <= a.x.max(b.x)
            && p.y >= a.y.min(b.y)
            && p.y <= a.y.max(b.y)
    };
    on(c, a, b, d1) || on(d, a, b, d2) || on(a, c, d, d3) || on(b, c, d, d4)
}

fn first_self_intersection(ring: &[Point2]) -> Option<(usize, usize)> {
    let n = ring.len();
    for i in 0..n {
        for j in i + 1..n {
            // Skip adjacent edges (they share an endpoint by construction).
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

fn rings_intersect(r1: &[Point2], r2: &[Point2]) -> bool {
    ring_edges(r1).any(|(a, b)| ring_edges(r2).any(|(c, d)| segments_cross(a, b, c, d)))
}

/// The unit square, a fixture used throughout the tests and examples.
pub fn unit_square() -> PolygonSpec {
    PolygonSpec::new(
        "unit-square",
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ],
        vec![],
    )
    .expect("unit square is valid")
}

/// L-shaped hexagon with one re-entrant vertex (interior angle 3*pi/2).
pub fn l_shape() -> PolygonSpec {
    PolygonSpec::new(
        "l-shape",
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 2.0),
            Point2::new(0.0, 2.0),
        ],
        vec![],
    )
    .expect("l-shape is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square_text() -> &'static str {
        "# unit square\nname unit-square\nouter 4\n0 0\n1 0\n1 1\n0 1\n"
    }

    #[test]
    fn parse_unit_square() {
        let poly = PolygonSpec::parse(square_text()).unwrap();
        assert_eq!(poly.name, "unit-square");
        assert_eq!(poly.outer.len(), 4);
        assert!(poly.holes.is_empty());
        assert!((poly.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parse_rejects_clockwise_outer() {
        let text = "name cw\nouter 4\n0 0\n0 1\n1 1\n1 0\n";
        let err = PolygonSpec::parse(text).unwrap_err();
        assert!(err.to_string().contains("counterclockwise"), "{err}");
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "name bad\nouter 3\n0 0\n1 zzz\n0 1\n";
        match PolygonSpec::parse(text) {
            Err(Error::PolygonParse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn l_shape_has_one_reentrant_angle() {
        let angles = &l_shape().interior_angles()[0];
        let reentrant: Vec<_> = angles.iter().filter(|&&a| a > PI).collect();
        assert_eq!(reentrant.len(), 1);
        assert!((reentrant[0] - 1.5 * PI).abs() < 1e-12);
        // Brute-force check of every angle against dot/cross at the vertex.
        let ring = &l_shape().outer;
        for (i, &alpha) in angles.iter().enumerate() {
            let n = ring.len();
            let u = ring[(i + n - 1) % n] - ring[i];
            let w = ring[(i + 1) % n] - ring[i];
            let cos = u.dot(w) / (u.norm() * w.norm());
            assert!(
                (alpha.cos() - cos).abs() < 1e-12,
                "vertex {i}: angle {alpha} vs cos {cos}"
            );
        }
    }

    #[test]
    fn double_unit_square() {
        let surf = double(unit_square());
        assert_eq!(surf.cone_points.len(), 4);
        for c in &surf.cone_points {
            assert_eq!(c.rho, c.alpha / PI);
            assert!((c.rho - 0.5).abs() < 1e-14);
        }
        assert!((surf.total_area - 2.0).abs() < 1e-14);
        assert!(surf.gauss_bonnet_defect().abs() < 1e-12);
    }

    #[test]
    fn double_equilateral_triangle() {
        let tri = PolygonSpec::new(
            "equilateral",
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.5, 3f64.sqrt() / 2.0),
            ],
            vec![],
        )
        .unwrap();
        let surf = double(tri);
        assert_eq!(surf.cone_points.len(), 3);
        for c in &surf.cone_points {
            assert!((c.rho - 1.0 / 3.0).abs() < 1e-12);
        }
        // Gauss-Bonnet by brute-force angle sum: 3 * (2pi - 2pi/3) = 4pi = 2pi*chi.
        let total: f64 = surf.cone_points.iter().map(|c| 2.0 * PI - 2.0 * c.alpha).sum();
        assert!((total - 4.0 * PI).abs() < 1e-12);
        assert_eq!(surf.euler_characteristic(), 2);
    }

    #[test]
    fn double_l_shape() {
        let surf = double(l_shape());
        let rhos: Vec<f64> = surf.cone_points.iter().map(|c| c.rho).collect();
        assert_eq!(rhos.iter().filter(|&&r| (r - 1.5).abs() < 1e-12).count(), 1);
        assert_eq!(rhos.iter().filter(|&&r| (r - 0.5).abs() < 1e-12).count(), 5);
        assert!((surf.total_area - 6.0).abs() < 1e-12);
    }

    #[test]
    fn square_with_hole_gauss_bonnet() {
        let poly = PolygonSpec::new(
            "annulus",
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(4.0, 0.0),
                Point2::new(4.0, 4.0),
                Point2::new(0.0, 4.0),
            ],
            vec![vec![
                Point2::new(1.0, 1.0),
                Point2::new(1.0, 2.0),
                Point2::new(2.0, 2.0),
                Point2::new(2.0, 1.0),
            ]],
        )
        .unwrap();
        assert!((poly.area() - 15.0).abs() < 1e-12);
        let surf = double(poly);
        assert_eq!(surf.euler_characteristic(), 0);
        assert!(surf.gauss_bonnet_defect().abs() < 1e-12);
        // The hole corners are re-entrant for the domain: rho = 3/2.
        let hole_rhos = surf.cone_points.iter().filter(|c| (c.rho - 1.5).abs() < 1e-12);
        assert_eq!(hole_rhos.count(), 4);
    }

    #[test]
    fn rejects_self_intersection() {
        let bowtie = PolygonSpec::new(
            "bowtie",
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
            ],
            vec![],
        );
        assert!(bowtie.is_err());
    }

    #[test]
    fn rejects_hole_outside() {
        let poly = PolygonSpec::new(
            "bad-hole",
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            vec![vec![
                Point2::new(2.0, 2.0),
                Point2::new(2.0, 3.0),
                Point2::new(3.0, 3.0),
            ]],
        );
        assert!(poly.is_err());
    }

    #[test]
    fn flat_vertices_are_accepted_with_rho_one() {
        // A square with an extra collinear vertex on the bottom edge.
        let poly = PolygonSpec::new(
            "flat-vertex",
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(0.5, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            vec![],
        )
        .unwrap();
        let surf = double(poly);
        let flat: Vec<_> = surf
            .cone_points
            .iter()
            .filter(|c| (c.rho - 1.0).abs() < 1e-12)
            .collect();
        assert_eq!(flat.len(), 1);
        assert!(surf.gauss_bonnet_defect().abs() < 1e-12);
    }

    proptest! {
        /// Gauss-Bonnet holds for random convex polygons.
        #[test]
        fn gauss_bonnet_random_convex(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(3..12);
            let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            prop_assume!(angles.len() >= 3);
            let ring: Vec<Point2> = angles
                .iter()
                .map(|&t| Point2::new(t.cos(), t.sin()))
                .collect();
            let poly = PolygonSpec::new("convex", ring, vec![]).unwrap();
            let surf = double(poly);
            prop_assert!(surf.gauss_bonnet_defect().abs() < 1e-12 * 2.0 * PI * 2.0);
            for c in &surf.cone_points {
                prop_assert_eq!(c.rho, c.alpha / PI);
            }
        }
    }
}
