//! Annotation records.
//!
//! One line per image: the image path relative to the dataset root, then one
//! space-separated `x,y,w,h` group per box with two decimals, e.g.
//!
//! ```text
//! images/000001.png 100.00,50.00,40.00,40.00
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::BBox;

pub fn format_annotation_line(image_path: &str, boxes: &[BBox]) -> String {
    let mut line = image_path.to_owned();
    for b in boxes {
        write!(line, " {:.2},{:.2},{:.2},{:.2}", b.x, b.y, b.w, b.h).unwrap();
    }
    line
}

pub fn parse_annotation_line(line: &str) -> std::result::Result<(String, Vec<BBox>), String> {
    let mut fields = line.split_whitespace();
    let path = fields.next().ok_or("empty record")?.to_owned();
    let boxes = fields
        .map(|group| {
            let v: Vec<f64> = group
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}")))
                .collect::<std::result::Result<_, _>>()?;
            match v.as_slice() {
                &[x, y, w, h] => BBox::try_new(x, y, w, h).map_err(|e| e.to_string()),
                _ => Err(format!("box {group:?} needs 4 values")),
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((path, boxes))
}

pub fn read_annotation_file(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<BBox>)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_annotation_line(l).map_err(|m| Error::parse(path, i + 1, m)))
        .collect()
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// PASCAL-VOC style record with one `drone` object per box. Corners are
/// 1-based inclusive pixel indices as VOC tools expect.
pub fn voc_xml(filename: &str, width: u32, height: u32, boxes: &[BBox]) -> String {
    let mut xml = String::new();
    xml.push_str("<annotation>\n");
    xml.push_str("  <folder>images</folder>\n");
    writeln!(xml, "  <filename>{}</filename>", escape_xml(filename)).unwrap();
    xml.push_str("  <source>\n    <database>dronewatch synthetic</database>\n  </source>\n");
    writeln!(
        xml,
        "  <size>\n    <width>{width}</width>\n    <height>{height}</height>\n    <depth>3</depth>\n  </size>"
    )
    .unwrap();
    xml.push_str("  <segmented>0</segmented>\n");
    for b in boxes {
        let xmin = b.x.round() as i64 + 1;
        let ymin = b.y.round() as i64 + 1;
        let xmax = b.right().round() as i64;
        let ymax = b.bottom().round() as i64;
        writeln!(
            xml,
            "  <object>\n    <name>drone</name>\n    <pose>Unspecified</pose>\n    <truncated>0</truncated>\n    <difficult>0</difficult>\n    <bndbox>\n      <xmin>{xmin}</xmin>\n      <ymin>{ymin}</ymin>\n      <xmax>{xmax}</xmax>\n      <ymax>{ymax}</ymax>\n    </bndbox>\n  </object>"
        )
        .unwrap();
    }
    xml.push_str("</annotation>\n");
    xml
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let boxes = [BBox::new(100.0, 50.0, 40.0, 40.0), BBox::new(1.234, 5.678, 9.0, 10.5)];
        let line = format_annotation_line("images/000001.png", &boxes);
        assert_eq!(line, "images/000001.png 100.00,50.00,40.00,40.00 1.23,5.68,9.00,10.50");
        let (p, parsed) = parse_annotation_line(&line).unwrap();
        assert_eq!(p, "images/000001.png");
        assert_eq!(parsed[0], boxes[0]);
    }

    #[test]
    fn malformed_lines() {
        assert!(parse_annotation_line("a.png 1,2,3").is_err());
        assert!(parse_annotation_line("a.png 1,2,x,4").is_err());
        assert!(parse_annotation_line("a.png 1,2,0,4").is_err());
        assert_eq!(parse_annotation_line("a.png").unwrap().1, vec![]);
    }

    #[test]
    fn voc_corners() {
        let xml = voc_xml("a&b.png", 640, 480, &[BBox::new(10.0, 20.0, 30.0, 40.0)]);
        assert!(xml.contains("<filename>a&amp;b.png</filename>"));
        assert!(xml.contains("<xmin>11</xmin>"));
        assert!(xml.contains("<ymin>21</ymin>"));
        assert!(xml.contains("<xmax>40</xmax>"));
        assert!(xml.contains("<ymax>60</ymax>"));
        assert!(xml.contains("<width>640</width>"));
    }
}
