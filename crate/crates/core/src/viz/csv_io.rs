use std::path::Path;

use crate::{Error, Result, Scalar, Tensor};

use super::EmbeddingSet;

/// Header `x,y[,z],label,class_name`, one row per sample, floats in `{:.16e}`
/// (17 significant digits, so values read back exactly).
pub fn export_csv<T: Scalar>(es: &EmbeddingSet<T>, path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let d = es.dim();
    let mut header = vec!["x", "y", "z"][..d].to_vec();
    header.extend(["label", "class_name"]);
    w.write_record(&header).map_err(io)?;
    for (i, &y) in es.labels.iter().enumerate() {
        let mut rec: Vec<String> = es.points.row(i).iter().map(|v| format!("{:.16e}", v.to_f64_lossy())).collect();
        rec.push(y.to_string());
        rec.push(es.class_names[y].clone());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`export_csv`]. Class names come from the rows;
/// labels that never occur are named by their index.
pub fn read_csv(path: &Path) -> Result<EmbeddingSet<f64>> {
    let fmt = |detail: String| Error::format(path, detail);
    let mut r = csv::Reader::from_path(path).map_err(|e| fmt(e.to_string()))?;
    let header: Vec<String> = r.headers().map_err(|e| fmt(e.to_string()))?.iter().map(String::from).collect();
    let d = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x", "y", "label", "class_name"] => 2,
        ["x", "y", "z", "label", "class_name"] => 3,
        _ => return Err(fmt(format!("unexpected header {header:?}"))),
    };
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut names: Vec<Option<String>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| fmt(e.to_string()))?;
        if rec.len() != d + 2 {
            return Err(fmt(format!("row {} has {} fields", line + 2, rec.len())));
        }
        for k in 0..d {
            let v: f64 = rec[k].parse().map_err(|_| fmt(format!("row {}: bad number `{}`", line + 2, &rec[k])))?;
            points.push(v);
        }
        let y: usize = rec[d].parse().map_err(|_| fmt(format!("row {}: bad label `{}`", line + 2, &rec[d])))?;
        if names.len() <= y {
            names.resize(y + 1, None);
        }
        names[y].get_or_insert_with(|| rec[d + 1].to_string());
        labels.push(y);
    }
    if labels.is_empty() {
        return Err(fmt("no rows".into()));
    }
    let class_names = names.into_iter().enumerate().map(|(i, n)| n.unwrap_or_else(|| i.to_string())).collect();
    EmbeddingSet::new(Tensor::from_vec(&[labels.len(), d], points)?, labels, class_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    #[test]
    fn two_point_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let es = EmbeddingSet::new(
            Tensor::from_rows(&[vec![0.5f64, -1.0], vec![0.1, 2.0]]).unwrap(),
            vec![1, 0],
            vec!["zero".into(), "one".into()],
        )
        .unwrap();
        export_csv(&es, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "x,y,label,class_name\n\
             5.0000000000000000e-1,-1.0000000000000000e0,1,one\n\
             1.0000000000000001e-1,2.0000000000000000e0,0,zero\n"
        );
        assert_eq!(read_csv(&p).unwrap(), es);
    }

    #[test]
    fn random_3d_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let mut rng = Rng::new(4);
        let pts = Tensor::<f64>::randn(&[40, 3], 1e3, &mut rng).unwrap();
        let names: Vec<String> = ["T-shirt/top", "a,b", "q\"uote"].iter().map(|s| s.to_string()).collect();
        let es = EmbeddingSet::new(pts, (0..40).map(|i| i % 3).collect(), names).unwrap();
        export_csv(&es, &p).unwrap();
        let header = std::fs::read_to_string(&p).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "x,y,z,label,class_name");
        assert_eq!(read_csv(&p).unwrap(), es);
    }

    #[test]
    fn malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_csv(&p), Err(Error::Format { .. })));
        std::fs::write(&p, "x,y,label,class_name\n1,zz,0,a\n").unwrap();
        assert!(read_csv(&p).is_err());
        std::fs::write(&p, "x,y,label,class_name\n").unwrap();
        assert!(read_csv(&p).is_err());
    }
}
